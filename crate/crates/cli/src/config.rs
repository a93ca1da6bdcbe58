//! TOML run configuration and its translation into engine types.
//!
//! Every section is optional at parse time; each subcommand asks for the
//! sections it needs and reports the missing one by name.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use switchpoint_core::env::{EnvSpec, NoiseKind, NoiseSpec};
use switchpoint_core::eval::{PolicySpec, RegretScalingSpec, Scenario, SweepSpec};
use switchpoint_core::policies::PolicyKind;
use switchpoint_core::schedule::{build_geometric, build_uniform};
use switchpoint_core::{
    CostModel, DiscountSpec, EpochSchedule, GapCurve, Horizon, PolicyConfig, PowerLawCurve, SampleFlow,
    TabulatedCurve, TrainMode, ValueContext,
};

use crate::error::{CliError, CliResult};

/// Default cap on sweep work (cells x seeds x steps).
pub const DEFAULT_MAX_WORK: u64 = 10_000_000_000;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub flow: Option<FlowSection>,
    pub horizon: Option<HorizonSection>,
    pub discount: Option<DiscountSection>,
    pub costs: Option<CostsSection>,
    pub curve: Option<CurveSection>,
    pub schedule: Option<ScheduleSection>,
    pub noise: Option<NoiseSection>,
    pub env: Option<EnvSection>,
    pub policy: Option<PolicySection>,
    pub sweep: Option<SweepSection>,
    pub regret_scaling: Option<RegretSection>,
    pub replay: Option<ReplaySection>,
    /// Directory that relative replay paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub n: Option<u64>,
    pub batches: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub steps: Option<u64>,
    #[serde(default)]
    pub infinite: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountSection {
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TrainModeName {
    #[default]
    PerRetrain,
    Polynomial,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    #[serde(default)]
    pub c_acq_pre: f64,
    #[serde(default)]
    pub c_acq_post: f64,
    #[serde(default)]
    pub c_train: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub train_mode: TrainModeName,
    #[serde(default)]
    pub c_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSection {
    PowerLaw { g_star: f64, g0: f64, alpha: f64 },
    Tabulated { gaps: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    Uniform { step: u64 },
    Geometric { first: u64, ratio: f64 },
    Explicit { epochs: Vec<u64> },
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindName {
    #[default]
    Gaussian,
    Bounded,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub kind: NoiseKindName,
    #[serde(default = "one")]
    pub sigma0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    #[serde(default = "half")]
    pub rho: f64,
    #[serde(default)]
    pub drift: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: String,
    #[serde(default)]
    pub gamma: f64,
    pub window: Option<usize>,
    /// 1-based OSE evaluation epoch; the last epoch when omitted.
    pub ose_epoch: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub c_acq: Vec<f64>,
    pub c_train: Vec<f64>,
    pub beta: Option<Vec<f64>>,
    pub c_s: Option<Vec<f64>>,
    pub policies: Option<Vec<String>>,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub gamma: f64,
    pub max_work: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegretSection {
    pub horizons: Option<Vec<u64>>,
    pub seeds: Option<usize>,
    pub gamma: Option<f64>,
    pub window: Option<usize>,
    pub geometric_first: Option<u64>,
    pub geometric_ratio: Option<f64>,
    pub ose_exponent: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub estimates: PathBuf,
    pub future: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_sweep_seeds() -> usize {
    30
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    // -----------------------------------------------------------------------
    // Engine types
    // -----------------------------------------------------------------------

    pub fn flow(&self) -> CliResult<SampleFlow> {
        let f = self.flow.as_ref().ok_or_else(|| missing("flow"))?;
        match (f.n, &f.batches) {
            (Some(n), None) => Ok(SampleFlow::constant(n)?),
            (None, Some(b)) => Ok(SampleFlow::from_batches(b.clone())?),
            _ => Err(CliError::Config("[flow] needs exactly one of `n` or `batches`".into())),
        }
    }

    pub fn horizon(&self) -> CliResult<Horizon> {
        let h = self.horizon.as_ref().ok_or_else(|| missing("horizon"))?;
        match (h.steps, h.infinite) {
            (Some(t), false) => Ok(Horizon::finite(t)?),
            (None, true) => Ok(Horizon::Infinite),
            _ => Err(CliError::Config(
                "[horizon] needs exactly one of `steps` or `infinite = true`".into(),
            )),
        }
    }

    pub fn beta(&self) -> f64 {
        self.discount.as_ref().map_or(1.0, |d| d.beta)
    }

    pub fn discount(&self) -> CliResult<DiscountSpec> {
        Ok(DiscountSpec::new(self.beta())?)
    }

    pub fn costs(&self) -> CliResult<CostModel> {
        let c = self.costs.clone().unwrap_or_default();
        let costs = CostModel {
            c_acq_pre: c.c_acq_pre,
            c_acq_post: c.c_acq_post,
            c_train: c.c_train,
            q: c.q,
            train_mode: match c.train_mode {
                TrainModeName::PerRetrain => TrainMode::PerRetrainConstant,
                TrainModeName::Polynomial => TrainMode::PolynomialInN,
            },
            c_s: c.c_s,
        };
        costs.validate()?;
        Ok(costs)
    }

    pub fn curve(&self) -> CliResult<GapCurve> {
        match self.curve.as_ref().ok_or_else(|| missing("curve"))? {
            CurveSection::PowerLaw { g_star, g0, alpha } => Ok(PowerLawCurve::new(*g_star, *g0, *alpha)?.into()),
            CurveSection::Tabulated { gaps } => Ok(GapCurve::Tabulated(TabulatedCurve::new(gaps.clone())?)),
        }
    }

    pub fn power_law(&self) -> CliResult<PowerLawCurve> {
        match self.curve()? {
            GapCurve::PowerLaw(c) => Ok(c),
            GapCurve::Tabulated(_) => Err(CliError::Config("this command needs [curve] kind = \"power_law\"".into())),
        }
    }

    pub fn schedule(&self) -> CliResult<EpochSchedule> {
        let s = self.schedule.as_ref().ok_or_else(|| missing("schedule"))?;
        let steps = self.horizon()?.steps();
        let need_steps = || {
            steps.ok_or_else(|| CliError::Config("uniform and geometric schedules need a finite horizon".into()))
        };
        Ok(match s {
            ScheduleSection::Uniform { step } => build_uniform(*step, need_steps()?)?,
            ScheduleSection::Geometric { first, ratio } => build_geometric(*first, *ratio, need_steps()?)?,
            ScheduleSection::Explicit { epochs } => EpochSchedule::explicit(epochs.clone(), steps)?,
        })
    }

    pub fn context(&self) -> CliResult<ValueContext> {
        Ok(ValueContext::new(
            self.flow()?,
            self.horizon()?,
            self.discount()?,
            self.costs()?,
            self.schedule()?,
        )?)
    }

    pub fn rho(&self) -> f64 {
        self.env.as_ref().map_or(0.5, |e| e.rho)
    }

    pub fn noise(&self, seed: u64) -> NoiseSpec {
        let (kind, sigma0) = self.noise.as_ref().map_or((NoiseKindName::Gaussian, 1.0), |n| (n.kind, n.sigma0));
        NoiseSpec {
            kind: match kind {
                NoiseKindName::Gaussian => NoiseKind::Gaussian,
                NoiseKindName::Bounded => NoiseKind::Bounded,
            },
            sigma0,
            seed,
        }
    }

    /// Synthetic environment. Infinite horizons generate estimates only, so
    /// the environment horizon stops at the last epoch.
    pub fn env(&self, ctx: &ValueContext, seed: u64) -> CliResult<EnvSpec> {
        let env = EnvSpec {
            truth: self.curve()?,
            flow: ctx.flow().clone(),
            schedule: ctx.schedule().clone(),
            horizon: ctx.horizon().steps().unwrap_or_else(|| ctx.schedule().last()),
            rho: self.rho(),
            noise: self.noise(seed),
            drift: self.env.as_ref().map_or(0.0, |e| e.drift),
        };
        env.validate()?;
        Ok(env)
    }

    pub fn policy(&self, schedule_len: usize) -> CliResult<PolicySpec> {
        let p = self.policy.as_ref().ok_or_else(|| missing("policy"))?;
        let kind = PolicyKind::parse(&p.kind)?;
        let config = PolicyConfig {
            rho: self.rho(),
            gamma: p.gamma,
            window: p.window.unwrap_or_else(|| kind.default_window()),
            ose_epoch_index: Some(p.ose_epoch.unwrap_or(schedule_len)),
        };
        config.validate(schedule_len)?;
        Ok(PolicySpec { kind, config })
    }

    pub fn sweep(&self, seed: u64) -> CliResult<SweepSpec> {
        let s = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
        let ctx = self.context()?;
        if ctx.horizon().steps().is_none() {
            return Err(CliError::Config("sweeps need a finite horizon".into()));
        }
        let env = self.env(&ctx, seed)?;
        let len = ctx.schedule().len();
        let names = s
            .policies
            .clone()
            .unwrap_or_else(|| PolicyKind::ALL.iter().map(|k| k.name().to_string()).collect());
        let policies = names
            .iter()
            .map(|name| {
                let kind = PolicyKind::parse(name)?;
                let config = PolicyConfig {
                    rho: self.rho(),
                    gamma: s.gamma,
                    window: kind.default_window(),
                    ose_epoch_index: Some(len),
                };
                config.validate(len)?;
                Ok(PolicySpec { kind, config })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(SweepSpec {
            c_acq: s.c_acq.clone(),
            c_train: s.c_train.clone(),
            beta: s.beta.clone().unwrap_or_else(|| vec![self.beta()]),
            c_s: s.c_s.clone().unwrap_or_else(|| vec![ctx.costs().c_s]),
            template: Scenario::new(ctx, env)?,
            policies,
            seeds: s.seeds,
            base_seed: seed,
            max_work: s.max_work.unwrap_or(DEFAULT_MAX_WORK),
        })
    }

    /// Regret experiment: defaults, overridden by whichever environment
    /// sections are present.
    pub fn regret_scaling(&self, seed: u64) -> CliResult<RegretScalingSpec> {
        let mut spec = RegretScalingSpec {
            base_seed: seed,
            ..Default::default()
        };
        if self.curve.is_some() {
            spec.curve = self.power_law()?;
        }
        if self.flow.is_some() {
            spec.n = self
                .flow()?
                .constant_n()
                .ok_or_else(|| CliError::Config("regret scaling needs a constant [flow] n".into()))?;
        }
        if self.discount.is_some() {
            spec.beta = self.beta();
        }
        if self.costs.is_some() {
            spec.costs = self.costs()?;
        }
        if let Some(n) = &self.noise {
            spec.sigma0 = n.sigma0;
            spec.noise = self.noise(seed).kind;
        }
        if self.env.is_some() {
            spec.rho = self.rho();
            spec.lsec.rho = self.rho();
        }
        let r = self.regret_scaling.clone().unwrap_or_default();
        if let Some(h) = r.horizons {
            spec.horizons = h;
        }
        if let Some(s) = r.seeds {
            spec.seeds = s;
        }
        if let Some(g) = r.gamma {
            spec.lsec.gamma = g;
        }
        if let Some(w) = r.window {
            spec.lsec.window = w;
        }
        if let Some(f) = r.geometric_first {
            spec.geometric_first = f;
        }
        if let Some(x) = r.geometric_ratio {
            spec.geometric_ratio = x;
        }
        if let Some(x) = r.ose_exponent {
            spec.ose_exponent = x;
        }
        spec.lsec.validate(usize::MAX)?;
        Ok(spec)
    }
}
