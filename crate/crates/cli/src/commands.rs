//! The five subcommands. Each returns the bytes it would print so the
//! caller decides between stdout and `--out`.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use log::info;
use switchpoint_core::analytic::{c_diff, setting1_tstar, setting2_tstar_asymptotic, theorem1_stop};
use switchpoint_core::env::{
    attach_future_from_csv, replay_from_csv, synth_estimates, synth_path, write_estimates_csv, write_future_csv,
};
use switchpoint_core::eval::{regret_scaling, run_policy, run_policy_with, sweep, write_regret_csv, write_sweep_csv, Deployed};
use switchpoint_core::{GapPath, Horizon};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const TRACE_HEADER: [&str; 8] = ["epoch", "t", "N", "gap_estimate", "v_lb", "v_hat", "v_ub", "decision"];

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

// ---------------------------------------------------------------------------
// analytic
// ---------------------------------------------------------------------------

pub fn analytic(cfg: &Config) -> CliResult<String> {
    let curve = cfg.power_law()?;
    let n = match &cfg.flow {
        Some(_) => cfg
            .flow()?
            .constant_n()
            .ok_or_else(|| CliError::Config("analytic results need a constant [flow] n".into()))?,
        None => 1,
    };
    let costs = cfg.costs()?;
    let beta = cfg.discount()?.beta();
    let mut out = String::new();
    let _ = writeln!(out, "g_star = {}\ng0 = {}\nalpha = {}\nn = {n}\nbeta = {beta}", curve.g_star, curve.g0, curve.alpha);

    if beta < 1.0 {
        let s = theorem1_stop(&curve, n, beta, &costs)?;
        let _ = writeln!(out, "c_diff = {}\nK = {}", s.c_diff, s.k);
        match (s.t0, s.t_star_continuous, s.t_star_integer) {
            (Some(t0), Some(tc), Some(ti)) => {
                let _ = writeln!(out, "t0 = {t0}\nt_star_continuous = {tc}\nt_star = {ti}");
                if let Some(v) = s.value_at_t_star {
                    let _ = writeln!(out, "value_at_t_star = {v}");
                }
                if let Some(d) = s.delta_v_at_t_star {
                    let _ = writeln!(out, "delta_v_at_t_star = {d}");
                }
                let _ = writeln!(out, "setting2_t_star_asymptotic = {}", setting2_tstar_asymptotic(&curve, n, beta, s.c_diff)?);
                if s.switch_is_optimal {
                    let _ = writeln!(out, "decision = switch at t = {ti}");
                } else {
                    let _ = writeln!(out, "decision = discard (value at t* is not positive)");
                }
            }
            _ => {
                let _ = writeln!(out, "decision = never switch (K <= 0)");
            }
        }
    }

    if let Some(Horizon::Finite(t_max)) = cfg.horizon.as_ref().map(|_| cfg.horizon()).transpose()? {
        if beta < 1.0 {
            let _ = writeln!(out, "setting1 = skipped (discounted)");
        } else if costs.c_acq_pre != costs.c_acq_post || costs.c_train != 0.0 {
            let _ = writeln!(out, "setting1 = skipped (needs c_acq_pre == c_acq_post and c_train = 0)");
        } else {
            let r = setting1_tstar(&curve, n, t_max, costs.c_acq_pre, costs.c_s)?;
            let _ = writeln!(
                out,
                "horizon = {t_max}\nsetting1_t_star_asymptotic = {}\nsetting1_t_star_continuous = {}\nsetting1_t_star = {}\nsetting1_value_at_t_star = {}",
                r.t_star_asymptotic, r.t_star_continuous, r.t_star_integer, r.value_at_t_star
            );
            let _ = writeln!(out, "setting1_c_diff = {}", c_diff(&costs, 1.0, n)?);
            if r.switch {
                let _ = writeln!(out, "setting1_decision = switch at t = {}", r.t_star_integer);
            } else {
                let _ = writeln!(out, "setting1_decision = never switch");
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub struct PathOutputs<'a> {
    pub estimates: Option<&'a Path>,
    pub future: Option<&'a Path>,
}

fn load_replay(cfg: &Config) -> CliResult<Option<GapPath>> {
    let Some(r) = &cfg.replay else {
        return Ok(None);
    };
    let mut path = replay_from_csv(open(&cfg.resolve(&r.estimates))?)?;
    if let Some(f) = &r.future {
        attach_future_from_csv(&mut path, open(&cfg.resolve(f))?)?;
    }
    Ok(Some(path))
}

/// Undefined trace values print as `NA`; negative zero prints as `0`.
fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        (x + 0.0).to_string()
    }
}

pub fn simulate(cfg: &Config, seed: u64, paths: PathOutputs) -> CliResult<Vec<u8>> {
    let ctx = cfg.context()?;
    let policy = cfg.policy(ctx.schedule().len())?;
    let replay = load_replay(cfg)?;
    let result = match replay {
        Some(path) => {
            info!("replaying {} epochs", path.estimates.len());
            write_path(&path, &paths)?;
            run_policy(&ctx, &path, &policy)?
        }
        None => {
            let env = cfg.env(&ctx, seed)?;
            if ctx.horizon().steps().is_some() {
                let path = synth_path(&env)?;
                write_path(&path, &paths)?;
                run_policy(&ctx, &path, &policy)?
            } else {
                if paths.future.is_some() {
                    return Err(CliError::Config("infinite horizons have no post-switch matrix to write".into()));
                }
                let path = GapPath {
                    estimates: synth_estimates(&env)?,
                    future_gaps: None,
                };
                write_path(&path, &paths)?;
                run_policy_with(&ctx, &path, &policy, Deployed::Expected(&env))?
            }
        }
    };

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(TRACE_HEADER).map_err(csv_err)?;
    for e in &result.trace {
        wtr.write_record([
            e.epoch.to_string(),
            e.t.to_string(),
            e.n_cum.to_string(),
            fmt_f64(e.gap_estimate),
            fmt_f64(e.v_lb),
            fmt_f64(e.v_hat),
            fmt_f64(e.v_ub),
            e.decision.label().to_string(),
        ])
        .map_err(csv_err)?;
    }
    // summary row: realised total value in the v_hat column
    let n_stop = ctx.flow().cumulative(result.stop_time)?;
    wtr.write_record([
        "total".to_string(),
        result.stop_time.to_string(),
        n_stop.to_string(),
        String::new(),
        String::new(),
        fmt_f64(result.total_value),
        String::new(),
        result.decision.label().to_string(),
    ])
    .map_err(csv_err)?;
    wtr.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_path(path: &GapPath, out: &PathOutputs) -> CliResult<()> {
    if let Some(p) = out.estimates {
        write_estimates_csv(create(p)?, path)?;
    }
    if let Some(p) = out.future {
        if path.future_gaps.is_none() {
            return Err(CliError::Config("path has no post-switch gaps to write".into()));
        }
        write_future_csv(create(p)?, path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep and regret scaling
// ---------------------------------------------------------------------------

pub fn sweep_cmd(cfg: &Config, seed: u64) -> CliResult<Vec<u8>> {
    let spec = cfg.sweep(seed)?;
    info!("sweep over {} cells x {} seeds", spec.cells().len(), spec.seeds);
    let rows = sweep(&spec)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows)?;
    Ok(buf)
}

/// CSV bytes plus one `slope <policy> = <value>` line per policy.
pub fn regret_scaling_cmd(cfg: &Config, seed: u64) -> CliResult<(Vec<u8>, String)> {
    let spec = cfg.regret_scaling(seed)?;
    let report = regret_scaling(&spec)?;
    let mut buf = Vec::new();
    write_regret_csv(&mut buf, &report)?;
    let mut slopes = String::new();
    for (name, s) in &report.slopes {
        let _ = writeln!(slopes, "slope {name} = {s}");
    }
    Ok((buf, slopes))
}

// ---------------------------------------------------------------------------
// replay-validate
// ---------------------------------------------------------------------------

/// Parse and check a replay path; schedule, flow and horizon are checked
/// when the config defines them. Every failure is an input error.
pub fn replay_validate(cfg: &Config) -> CliResult<String> {
    let as_input = |e: CliError| match e {
        CliError::Runtime(m) => CliError::Config(m),
        other => other,
    };
    let path = load_replay(cfg)
        .map_err(as_input)?
        .ok_or_else(|| CliError::Config("missing [replay] section".into()))?;
    path.validate().map_err(|e| as_input(e.into()))?;
    if cfg.schedule.is_some() {
        let ctx = cfg.context()?;
        let times = path.epoch_times();
        if times != ctx.schedule().epochs() {
            return Err(CliError::Config(format!(
                "replay epochs {times:?} do not match the schedule {:?}",
                ctx.schedule().epochs()
            )));
        }
        for e in &path.estimates {
            let n = ctx.flow().cumulative(e.time_step)?;
            if n != e.cumulative {
                return Err(CliError::Config(format!(
                    "epoch {}: cumulative_samples {} but the flow gives {n}",
                    e.epoch_index, e.cumulative
                )));
            }
        }
        if let (Some(t_max), Some(fg)) = (ctx.horizon().steps(), &path.future_gaps) {
            if let Some(row) = fg.rows.iter().find(|r| r.last_step() < t_max) {
                return Err(CliError::Config(format!(
                    "future gaps starting at step {} stop at {} before the horizon {t_max}",
                    row.first_step,
                    row.last_step()
                )));
            }
        }
    }
    let rows = path.future_gaps.as_ref().map_or(0, |f| f.rows.len());
    Ok(format!("ok: {} epochs, {rows} future rows\n", path.estimates.len()))
}
