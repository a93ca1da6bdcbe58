use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use switchpoint_cli::commands::{self, PathOutputs};
use switchpoint_cli::{CliError, CliResult, Config};

#[derive(Debug, Parser)]
#[command(name = "switchpoint", version, about = "Incumbent-vs-challenger switching engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel work.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form optimal stopping for the configured curve and costs.
    Analytic,
    /// Run one policy on one path and write its per-epoch trace.
    Simulate {
        /// Also write the path's estimates CSV here.
        #[arg(long)]
        path_out: Option<PathBuf>,
        /// Also write the path's post-switch gap CSV here.
        #[arg(long)]
        future_out: Option<PathBuf>,
    },
    /// Cost-grid sweep over seeded paths.
    Sweep,
    /// Mean regret against horizon with fitted log-log slopes.
    RegretScaling,
    /// Check a replay CSV against the configuration.
    ReplayValidate,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Output {
            path: p.display().to_string(),
            source,
        }),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    info!("seed {seed}");
    let out = cli.out.as_deref();
    match cli.command {
        Command::Analytic => emit(out, commands::analytic(&cfg)?.as_bytes()),
        Command::Simulate { path_out, future_out } => {
            let paths = PathOutputs {
                estimates: path_out.as_deref(),
                future: future_out.as_deref(),
            };
            emit(out, &commands::simulate(&cfg, seed, paths)?)
        }
        Command::Sweep => emit(out, &commands::sweep_cmd(&cfg, seed)?),
        Command::RegretScaling => {
            let (csv, slopes) = commands::regret_scaling_cmd(&cfg, seed)?;
            emit(out, &csv)?;
            if out.is_some() {
                print!("{slopes}");
            }
            Ok(())
        }
        Command::ReplayValidate => emit(out, commands::replay_validate(&cfg)?.as_bytes()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWITCHPOINT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
