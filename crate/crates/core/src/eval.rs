//! Running policies over paths: value accounting, regret, seeded ensembles,
//! cost-grid sweeps and the regret-versus-horizon experiment.
//!
//! Parallel work goes through rayon with order-preserving collects, so every
//! result is independent of the thread count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::env::{synth_estimates, synth_path, EnvSpec};
use crate::error::{Error, Result};
use crate::model::{CostModel, Decision, DiscountSpec, EpochSchedule, GapPath, PolicyConfig, PowerLawCurve};
use crate::oracle::{parametric_oracle, path_oracle};
use crate::policies::{EpochTrace, PolicyKind, PolicyState};
use crate::schedule::{build_geometric, log_log_slope};
use crate::value::ValueContext;

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

/// Where the deployed challenger's post-switch gaps come from.
#[derive(Debug, Clone, Copy)]
pub enum Deployed<'a> {
    /// Realised gap matrix stored on the path.
    Realized,
    /// The challenger's own estimate, held constant.
    Estimated,
    /// Noise-free expected gaps of the environment.
    Expected(&'a EnvSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub config: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub decision: Decision,
    /// Step of the terminal epoch.
    pub stop_time: u64,
    pub total_value: f64,
    pub trace: Vec<EpochTrace>,
}

impl RunResult {
    pub fn stop_epoch(&self) -> usize {
        self.decision.epoch_index().expect("runs end in a terminal decision")
    }

    pub fn switched(&self) -> bool {
        matches!(self.decision, Decision::Switch { .. })
    }
}

/// Feed the path to the policy until it stops.
pub fn decide(ctx: &ValueContext, path: &GapPath, spec: &PolicySpec) -> Result<(Decision, Vec<EpochTrace>)> {
    if path.epoch_times() != ctx.schedule().epochs() {
        return Err(Error::Validation(format!(
            "path epochs {:?} do not match the schedule {:?}",
            path.epoch_times(),
            ctx.schedule().epochs()
        )));
    }
    let mut state = PolicyState::new(spec.kind, spec.config, ctx.schedule().len())?;
    for e in &path.estimates {
        if state.step(ctx, *e)?.is_terminal() {
            break;
        }
    }
    let decision = state
        .decision()
        .ok_or_else(|| Error::Validation("policy ended without a terminal decision".into()))?;
    Ok((decision, state.trace().to_vec()))
}

/// Epochs at which the policy paid for training, up to and including `k`.
fn charged_epochs(ctx: &ValueContext, kind: PolicyKind, k: usize) -> Vec<u64> {
    let epochs = ctx.schedule().epochs();
    if kind.is_sequential() {
        epochs[..k].to_vec()
    } else {
        vec![epochs[k - 1]]
    }
}

fn deployed_post(ctx: &ValueContext, path: &GapPath, t: u64, challenger: usize, deployed: Deployed) -> Result<f64> {
    match deployed {
        Deployed::Realized => {
            let row = path
                .future_gaps
                .as_ref()
                .and_then(|fg| fg.row(challenger))
                .ok_or_else(|| Error::Config(format!("no realised gaps for challenger {challenger}")))?;
            ctx.post_net_with(t, |tau| {
                row.gap(tau)
                    .ok_or_else(|| Error::Validation(format!("realised gaps for challenger {challenger} miss step {tau}")))
            })
        }
        Deployed::Estimated => Ok(ctx.post_net(t, path.estimates[challenger - 1].gap)),
        Deployed::Expected(env) => {
            let t_c = path.estimates[challenger - 1].time_step;
            if env.drift == 0.0 {
                Ok(ctx.post_net(t, env.deployed_gap(t_c, t)?))
            } else {
                ctx.post_net_with(t, |tau| env.deployed_gap(t_c, tau))
            }
        }
    }
}

/// Total discounted value of a terminal decision.
pub fn decision_value(
    ctx: &ValueContext,
    path: &GapPath,
    kind: PolicyKind,
    decision: Decision,
    deployed: Deployed,
) -> Result<f64> {
    let k = decision
        .epoch_index()
        .ok_or_else(|| Error::Validation("cannot value a Continue decision".into()))?;
    let t = ctx.schedule().time(k).ok_or_else(|| Error::Validation(format!("epoch {k} not in schedule")))?;
    let pre = ctx.pre_cost_to(t, &charged_epochs(ctx, kind, k))?;
    match decision {
        Decision::Switch {
            challenger_epoch_index,
            ..
        } => {
            let post = deployed_post(ctx, path, t, challenger_epoch_index, deployed)?;
            Ok(-pre - ctx.discount().factor(t) * ctx.costs().c_s + post)
        }
        _ => Ok(-pre),
    }
}

/// Run with the default gap source: realised gaps when the path carries
/// them, otherwise the deployed challenger's own estimate.
pub fn run_policy(ctx: &ValueContext, path: &GapPath, spec: &PolicySpec) -> Result<RunResult> {
    let deployed = if path.future_gaps.is_some() {
        Deployed::Realized
    } else {
        Deployed::Estimated
    };
    run_policy_with(ctx, path, spec, deployed)
}

pub fn run_policy_with(ctx: &ValueContext, path: &GapPath, spec: &PolicySpec, deployed: Deployed) -> Result<RunResult> {
    path.validate()?;
    let (decision, trace) = decide(ctx, path, spec)?;
    let total_value = decision_value(ctx, path, spec.kind, decision, deployed)?;
    let stop_time = ctx.schedule().time(decision.epoch_index().expect("terminal")).expect("in schedule");
    Ok(RunResult {
        policy: spec.kind,
        decision,
        stop_time,
        total_value,
        trace,
    })
}

/// Per-step cash flows `π(1..=T)` of a finished run.
pub fn cash_flows(ctx: &ValueContext, path: &GapPath, result: &RunResult, deployed: Deployed) -> Result<Vec<f64>> {
    let end = ctx
        .horizon()
        .steps()
        .ok_or_else(|| Error::Config("cash-flow stream needs a finite horizon".into()))?;
    let k = result.stop_epoch();
    let train = charged_epochs(ctx, result.policy, k);
    let costs = ctx.costs();
    let flow = ctx.flow();
    let t_stop = result.stop_time;
    let deployed_gap = |tau: u64, challenger: usize| -> Result<f64> {
        match deployed {
            Deployed::Realized => path
                .future_gaps
                .as_ref()
                .and_then(|fg| fg.row(challenger))
                .and_then(|row| row.gap(tau))
                .ok_or_else(|| Error::Validation(format!("no realised gap for challenger {challenger} at {tau}"))),
            Deployed::Estimated => Ok(path.estimates[challenger - 1].gap),
            Deployed::Expected(env) => env.deployed_gap(path.estimates[challenger - 1].time_step, tau),
        }
    };
    let mut out = Vec::with_capacity(end as usize);
    for tau in 1..=end {
        let n = flow.batch(tau)? as f64;
        let pi = if tau <= t_stop {
            let mut c = costs.c_acq_pre * n;
            if train.contains(&tau) {
                c += costs.training_cost(flow.cumulative(tau)?);
            }
            if tau == t_stop && result.switched() {
                c += costs.c_s;
            }
            -c
        } else {
            match result.decision {
                Decision::Switch {
                    challenger_epoch_index,
                    ..
                } => n * deployed_gap(tau, challenger_epoch_index)? - costs.c_acq_post * n,
                _ => 0.0,
            }
        };
        out.push(pi);
    }
    Ok(out)
}

/// Oracle value minus policy value on the same path.
pub fn regret(total_value: f64, oracle_value: f64) -> f64 {
    oracle_value - total_value
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (0 for fewer than two values).
fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Most frequent value; ties go to the smallest.
fn mode(xs: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &x in xs {
        *counts.entry(x).or_default() += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (x, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((x, c));
        }
    }
    best.map(|(x, _)| x)
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Aggregate over seeds for one policy (or the oracle).
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub runs: usize,
    pub mean_value: f64,
    pub sd_value: f64,
    /// Value quantiles at [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
    /// Mean 1-based stop epoch over switching runs.
    pub mean_stop_epoch: Option<f64>,
    /// Modal stop epoch over switching runs.
    pub mode_stop_epoch: Option<usize>,
    pub switch_freq: f64,
    pub discard_freq: f64,
}

/// One run's outcome, enough to aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub value: f64,
    /// `Some(k)` when switching at epoch `k`, `None` for discard.
    pub switch_epoch: Option<usize>,
}

impl Outcome {
    fn from_decision(value: f64, d: Decision) -> Self {
        let switch_epoch = match d {
            Decision::Switch { epoch_index, .. } => Some(epoch_index),
            _ => None,
        };
        Self { value, switch_epoch }
    }
}

pub fn summarize(name: &str, outcomes: &[Outcome]) -> Summary {
    let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let stops: Vec<usize> = outcomes.iter().filter_map(|o| o.switch_epoch).collect();
    let runs = outcomes.len();
    let quantiles = if runs == 0 {
        [f64::NAN; 5]
    } else {
        QUANTILE_LEVELS.map(|p| quantile(&sorted, p))
    };
    Summary {
        name: name.to_string(),
        runs,
        mean_value: if runs == 0 { f64::NAN } else { mean(&values) },
        sd_value: sd(&values),
        quantiles,
        mean_stop_epoch: if stops.is_empty() {
            None
        } else {
            Some(stops.iter().sum::<usize>() as f64 / stops.len() as f64)
        },
        mode_stop_epoch: mode(&stops),
        switch_freq: stops.len() as f64 / runs as f64,
        discard_freq: (runs - stops.len()) as f64 / runs as f64,
    }
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Value context plus the environment that generates its paths. The
/// environment's schedule must match the context's.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ctx: ValueContext,
    pub env: EnvSpec,
}

impl Scenario {
    pub fn new(ctx: ValueContext, env: EnvSpec) -> Result<Self> {
        if ctx.schedule().epochs() != env.schedule.epochs() {
            return Err(Error::Config("environment and value schedules differ".into()));
        }
        if let Some(t) = ctx.horizon().steps() {
            if env.horizon < t {
                return Err(Error::Config(format!(
                    "environment horizon {} is shorter than the value horizon {t}",
                    env.horizon
                )));
            }
        }
        env.validate()?;
        Ok(Self { ctx, env })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub seeds: usize,
    pub policies: Vec<Summary>,
    pub oracle: Summary,
    /// Mean per-path regret against the path oracle, one per policy.
    pub mean_regret: Vec<f64>,
}

/// Seed of the `i`-th path.
pub fn path_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// Run every policy and the path oracle on `seeds` shared paths.
pub fn ensemble(scenario: &Scenario, policies: &[PolicySpec], base_seed: u64, seeds: usize) -> Result<EnsembleReport> {
    if seeds == 0 {
        return Err(Error::Config("ensemble needs at least one seed".into()));
    }
    let per_seed: Vec<(Vec<Outcome>, Outcome)> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let path = synth_path(&scenario.env.with_seed(path_seed(base_seed, i)))?;
            let oracle = path_oracle(&scenario.ctx, &path)?;
            let runs = policies
                .iter()
                .map(|p| run_policy(&scenario.ctx, &path, p).map(|r| Outcome::from_decision(r.total_value, r.decision)))
                .collect::<Result<Vec<_>>>()?;
            Ok((runs, Outcome::from_decision(oracle.value, oracle.decision)))
        })
        .collect::<Result<Vec<_>>>()?;
    let oracle: Vec<Outcome> = per_seed.iter().map(|(_, o)| *o).collect();
    let mut summaries = Vec::with_capacity(policies.len());
    let mut regrets = Vec::with_capacity(policies.len());
    for (j, p) in policies.iter().enumerate() {
        let outs: Vec<Outcome> = per_seed.iter().map(|(r, _)| r[j]).collect();
        let reg: Vec<f64> = outs.iter().zip(&oracle).map(|(o, or)| regret(o.value, or.value)).collect();
        regrets.push(mean(&reg));
        summaries.push(summarize(p.kind.name(), &outs));
    }
    Ok(EnsembleReport {
        seeds,
        policies: summaries,
        oracle: summarize("oracle", &oracle),
        mean_regret: regrets,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Grid over acquisition cost (pre = post), training coefficient, discount
/// and switching cost. Training mode and exponent come from the template.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub c_acq: Vec<f64>,
    pub c_train: Vec<f64>,
    pub beta: Vec<f64>,
    pub c_s: Vec<f64>,
    pub template: Scenario,
    pub policies: Vec<PolicySpec>,
    pub seeds: usize,
    pub base_seed: u64,
    /// Cap on cells × seeds × horizon steps.
    pub max_work: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell_id: usize,
    pub c_acq: f64,
    pub c_train: f64,
    pub beta: f64,
    pub c_s: f64,
    pub policy: String,
    pub summary: Summary,
    pub oracle_mean_value: f64,
    pub oracle_mode_stop_epoch: Option<usize>,
    pub seeds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub id: usize,
    pub c_acq: f64,
    pub c_train: f64,
    pub beta: f64,
    pub c_s: f64,
}

impl SweepSpec {
    /// Grid cells in output order: β, then c_s, then c_acq, then c_train.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &beta in &self.beta {
            for &c_s in &self.c_s {
                for &c_acq in &self.c_acq {
                    for &c_train in &self.c_train {
                        out.push(Cell {
                            id: out.len(),
                            c_acq,
                            c_train,
                            beta,
                            c_s,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("c_acq", &self.c_acq), ("c_train", &self.c_train), ("beta", &self.beta), ("c_s", &self.c_s)] {
            if grid.is_empty() {
                return Err(Error::Config(format!("sweep grid {name} is empty")));
            }
        }
        if self.seeds == 0 {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("sweep needs at least one policy".into()));
        }
        let cells = (self.c_acq.len() * self.c_train.len() * self.beta.len() * self.c_s.len()) as u64;
        let steps = self.template.env.horizon;
        let work = cells.saturating_mul(self.seeds as u64).saturating_mul(steps);
        if work > self.max_work {
            return Err(Error::ResourceGuard(format!(
                "sweep work {cells} cells x {} seeds x {steps} steps = {work} exceeds max_work {}",
                self.seeds, self.max_work
            )));
        }
        Ok(())
    }
}

fn cell_context(template: &ValueContext, cell: &Cell) -> Result<ValueContext> {
    let costs = CostModel {
        c_acq_pre: cell.c_acq,
        c_acq_post: cell.c_acq,
        c_train: cell.c_train,
        c_s: cell.c_s,
        ..*template.costs()
    };
    template.with_discount(DiscountSpec::new(cell.beta)?)?.with_costs(costs)
}

/// One row per (cell, policy) plus one `oracle` row per cell. Paths depend
/// only on the environment and seed, so every cell sees the same paths.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let paths: Vec<GapPath> = (0..spec.seeds)
        .into_par_iter()
        .map(|i| synth_path(&spec.template.env.with_seed(path_seed(spec.base_seed, i))))
        .collect::<Result<Vec<_>>>()?;
    let cells = spec.cells();
    let per_cell: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|cell| {
            let ctx = cell_context(&spec.template.ctx, cell)?;
            let mut oracle = Vec::with_capacity(paths.len());
            for p in &paths {
                let o = path_oracle(&ctx, p)?;
                oracle.push(Outcome::from_decision(o.value, o.decision));
            }
            let oracle_summary = summarize("oracle", &oracle);
            let mut rows = Vec::with_capacity(spec.policies.len() + 1);
            let mut push = |summary: Summary| {
                rows.push(SweepRow {
                    cell_id: cell.id,
                    c_acq: cell.c_acq,
                    c_train: cell.c_train,
                    beta: cell.beta,
                    c_s: cell.c_s,
                    policy: summary.name.clone(),
                    summary,
                    oracle_mean_value: oracle_summary.mean_value,
                    oracle_mode_stop_epoch: oracle_summary.mode_stop_epoch,
                    seeds: paths.len(),
                })
            };
            for p in &spec.policies {
                let outs = paths
                    .iter()
                    .map(|path| run_policy(&ctx, path, p).map(|r| Outcome::from_decision(r.total_value, r.decision)))
                    .collect::<Result<Vec<_>>>()?;
                push(summarize(p.kind.name(), &outs));
            }
            push(oracle_summary.clone());
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

pub const SWEEP_HEADER: [&str; 15] = [
    "cell_id",
    "c_acq",
    "c_train",
    "beta",
    "c_s",
    "policy",
    "mean_value",
    "sd_value",
    "mean_stop_epoch",
    "mode_stop_epoch",
    "switch_freq",
    "discard_freq",
    "oracle_mean_value",
    "oracle_mode_stop_epoch",
    "seeds",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SWEEP_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.cell_id.to_string(),
            r.c_acq.to_string(),
            r.c_train.to_string(),
            r.beta.to_string(),
            r.c_s.to_string(),
            r.policy.clone(),
            r.summary.mean_value.to_string(),
            r.summary.sd_value.to_string(),
            opt(r.summary.mean_stop_epoch),
            opt(r.summary.mode_stop_epoch),
            r.summary.switch_freq.to_string(),
            r.summary.discard_freq.to_string(),
            r.oracle_mean_value.to_string(),
            opt(r.oracle_mode_stop_epoch),
            r.seeds.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Regret scaling
// ---------------------------------------------------------------------------

/// Regret-versus-horizon experiment on a constant-flow power-law
/// environment. Policy values use the deployed challenger's expected gap;
/// the benchmark is the parametric oracle over every step.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretScalingSpec {
    pub curve: PowerLawCurve,
    pub n: u64,
    pub beta: f64,
    pub costs: CostModel,
    pub sigma0: f64,
    pub noise: crate::env::NoiseKind,
    pub rho: f64,
    pub horizons: Vec<u64>,
    pub seeds: usize,
    pub base_seed: u64,
    /// Look-ahead policy on a geometric schedule.
    pub lsec: PolicyConfig,
    pub geometric_first: u64,
    pub geometric_ratio: f64,
    /// OSE evaluates once at `⌈T^exponent⌉`.
    pub ose_exponent: f64,
}

impl Default for RegretScalingSpec {
    fn default() -> Self {
        Self {
            curve: PowerLawCurve {
                g_star: 0.5,
                g0: 1.0,
                alpha: 0.5,
            },
            n: 1,
            beta: 1.0,
            costs: CostModel::default(),
            sigma0: 1.0,
            noise: crate::env::NoiseKind::Gaussian,
            rho: 0.5,
            horizons: vec![1 << 10, 1 << 12, 1 << 14, 1 << 16],
            seeds: 200,
            base_seed: 0,
            lsec: PolicyConfig {
                rho: 0.5,
                gamma: 0.1,
                window: 2,
                ose_epoch_index: None,
            },
            geometric_first: 1,
            geometric_ratio: 2.0,
            ose_exponent: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretPoint {
    pub horizon: u64,
    pub policy: String,
    pub oracle_value: f64,
    pub mean_value: f64,
    pub mean_regret: f64,
    pub sd_regret: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretScalingReport {
    pub points: Vec<RegretPoint>,
    /// Fitted log-log slope of mean regret against `T`, per policy.
    pub slopes: Vec<(String, f64)>,
}

/// `⌈T^p⌉`, snapping values within rounding of an integer.
pub fn ceil_pow(t: u64, p: f64) -> u64 {
    let x = (t as f64).powf(p);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x {
        r as u64
    } else {
        x.ceil() as u64
    }
}

fn regret_point(
    spec: &RegretScalingSpec,
    horizon: u64,
    schedule: EpochSchedule,
    policy: PolicySpec,
) -> Result<RegretPoint> {
    let flow = crate::model::SampleFlow::constant(spec.n)?;
    let ctx = ValueContext::new(
        flow.clone(),
        crate::model::Horizon::finite(horizon)?,
        DiscountSpec::new(spec.beta)?,
        spec.costs,
        schedule.clone(),
    )?;
    let env = EnvSpec {
        truth: spec.curve.into(),
        flow,
        schedule,
        horizon,
        rho: spec.rho,
        noise: crate::env::NoiseSpec {
            kind: spec.noise,
            sigma0: spec.sigma0,
            seed: spec.base_seed,
        },
        drift: 0.0,
    };
    let oracle = parametric_oracle(&ctx, &env.truth)?.value;
    let outcomes: Vec<(f64, f64)> = (0..spec.seeds)
        .into_par_iter()
        .map(|i| {
            let env_i = env.with_seed(path_seed(spec.base_seed, i));
            let path = GapPath {
                estimates: synth_estimates(&env_i)?,
                future_gaps: None,
            };
            let r = run_policy_with(&ctx, &path, &policy, Deployed::Expected(&env_i))?;
            Ok((r.total_value, regret(r.total_value, oracle)))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let regrets: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    Ok(RegretPoint {
        horizon,
        policy: policy.kind.name().to_string(),
        oracle_value: oracle,
        mean_value: mean(&values),
        mean_regret: mean(&regrets),
        sd_regret: sd(&regrets),
        seeds: spec.seeds,
    })
}

pub fn regret_scaling(spec: &RegretScalingSpec) -> Result<RegretScalingReport> {
    if spec.horizons.len() < 2 {
        return Err(Error::Config("regret scaling needs at least two horizons".into()));
    }
    if spec.seeds == 0 {
        return Err(Error::Config("regret scaling needs at least one seed".into()));
    }
    let lsec = PolicySpec {
        kind: PolicyKind::Lsec,
        config: spec.lsec,
    };
    let ose = PolicySpec {
        kind: PolicyKind::Ose,
        config: PolicyConfig {
            ose_epoch_index: Some(1),
            ..spec.lsec
        },
    };
    let mut points = Vec::new();
    for &t in &spec.horizons {
        let geo = build_geometric(spec.geometric_first, spec.geometric_ratio, t)?;
        points.push(regret_point(spec, t, geo, lsec)?);
        let t_ose = ceil_pow(t, spec.ose_exponent).clamp(1, t - 1);
        points.push(regret_point(spec, t, EpochSchedule::explicit(vec![t_ose], Some(t))?, ose)?);
    }
    let mut slopes = Vec::new();
    for name in [lsec.kind.name(), ose.kind.name()] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.policy == name)
            .map(|p| (p.horizon as f64, p.mean_regret))
            .unzip();
        slopes.push((name.to_string(), log_log_slope(&xs, &ys)?));
    }
    Ok(RegretScalingReport { points, slopes })
}

pub const REGRET_HEADER: [&str; 8] = [
    "horizon",
    "policy",
    "oracle_value",
    "mean_value",
    "mean_regret",
    "sd_regret",
    "seeds",
    "slope",
];

pub fn write_regret_csv<W: Write>(w: W, report: &RegretScalingReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REGRET_HEADER)?;
    for p in &report.points {
        let slope = report
            .slopes
            .iter()
            .find(|(name, _)| *name == p.policy)
            .map_or(f64::NAN, |s| s.1);
        wtr.write_record([
            p.horizon.to_string(),
            p.policy.clone(),
            p.oracle_value.to_string(),
            p.mean_value.to_string(),
            p.mean_regret.to_string(),
            p.sd_regret.to_string(),
            p.seeds.to_string(),
            slope.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{NoiseKind, NoiseSpec};
    use crate::model::{Estimate, FutureGaps, FutureRow, Horizon, SampleFlow};

    fn ctx(t_max: u64, epochs: Vec<u64>, costs: CostModel) -> ValueContext {
        ValueContext::new(
            SampleFlow::constant(1).unwrap(),
            Horizon::finite(t_max).unwrap(),
            DiscountSpec::new(1.0).unwrap(),
            costs,
            EpochSchedule::explicit(epochs, Some(t_max)).unwrap(),
        )
        .unwrap()
    }

    fn flat_path(epochs: &[u64], t_max: u64, gap: f64) -> GapPath {
        GapPath {
            estimates: epochs
                .iter()
                .enumerate()
                .map(|(i, &t)| Estimate { epoch_index: i + 1, time_step: t, cumulative: t, gap })
                .collect(),
            future_gaps: Some(FutureGaps {
                rows: epochs
                    .iter()
                    .map(|&t| FutureRow { first_step: t + 1, gaps: vec![gap; (t_max - t) as usize] })
                    .collect(),
            }),
        }
    }

    fn gse(gamma: f64) -> PolicySpec {
        PolicySpec {
            kind: PolicyKind::Gse,
            config: PolicyConfig { rho: 0.5, gamma, window: 2, ose_epoch_index: None },
        }
    }

    #[test]
    fn discard_at_two_costs_two_steps() {
        let costs = CostModel { c_acq_pre: 0.1, c_s: 1.0, ..Default::default() };
        let c = ctx(5, vec![1, 2], costs);
        let p = flat_path(&[1, 2], 5, 0.0);
        let r = run_policy(&c, &p, &gse(10.0)).unwrap();
        assert_eq!(r.decision, Decision::Discard { epoch_index: 2 });
        assert!((r.total_value + 0.2).abs() < 1e-12);
        let pi = cash_flows(&c, &p, &r, Deployed::Realized).unwrap();
        assert_eq!(pi, vec![-0.1, -0.1, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn never_switch_pays_all_pre_costs() {
        let costs = CostModel { c_acq_pre: 0.1, c_acq_post: 0.5, c_train: 0.2, ..Default::default() };
        let c = ctx(6, vec![1, 2, 3], costs);
        let p = flat_path(&[1, 2, 3], 6, 0.1);
        let ose = PolicySpec { kind: PolicyKind::Ose, config: PolicyConfig::default() };
        let r = run_policy(&c, &p, &ose).unwrap();
        assert_eq!(r.decision, Decision::Discard { epoch_index: 3 });
        // acquisition at every step, training only at the evaluation epoch
        assert!((r.total_value + (0.3 + 0.2)).abs() < 1e-12);
    }

    fn noiseless_setting(epochs: Vec<u64>) -> (ValueContext, GapPath, PowerLawCurve) {
        let curve = PowerLawCurve::new(1.0, 1.0, 1.0).unwrap();
        let t_max = 400;
        let c = ValueContext::new(
            SampleFlow::constant(1).unwrap(),
            Horizon::finite(t_max).unwrap(),
            DiscountSpec::new(0.9).unwrap(),
            CostModel::default(),
            EpochSchedule::explicit(epochs.clone(), Some(t_max)).unwrap(),
        )
        .unwrap();
        let env = EnvSpec {
            truth: curve.into(),
            flow: SampleFlow::constant(1).unwrap(),
            schedule: EpochSchedule::explicit(epochs, Some(t_max)).unwrap(),
            horizon: t_max,
            rho: 0.5,
            noise: NoiseSpec { kind: NoiseKind::Gaussian, sigma0: 0.0, seed: 0 },
            drift: 0.0,
        };
        (c, synth_path(&env).unwrap(), curve)
    }

    #[test]
    fn noiseless_gse_total_matches_value_switch() {
        // first epoch at the analytic optimum t* = 4
        let (c, p, curve) = noiseless_setting((4..=20).collect());
        let r = run_policy(&c, &p, &gse(0.0)).unwrap();
        assert_eq!(r.stop_time, 4);
        let v = c.value_switch(4, curve.gap(c.flow(), 4).unwrap(), &[4]).unwrap().total();
        assert!((r.total_value - v).abs() < 1e-12);
        let pi = cash_flows(&c, &p, &r, Deployed::Realized).unwrap();
        let disc: f64 = pi.iter().enumerate().map(|(i, x)| 0.9f64.powi(i as i32 + 1) * x).sum();
        assert!((disc - r.total_value).abs() < 1e-9);
    }

    #[test]
    fn noiseless_gse_switches_at_first_positive_value() {
        // V(1) = 0 and V(2) > 0: the greedy rule stops at 2, before the optimum
        let (c, p, curve) = noiseless_setting((1..=20).collect());
        let r = run_policy(&c, &p, &gse(0.0)).unwrap();
        assert_eq!(r.stop_time, 2);
        let v = c.value_switch(2, curve.gap(c.flow(), 2).unwrap(), &[1, 2]).unwrap().total();
        assert!((r.total_value - v).abs() < 1e-12);
    }

    #[test]
    fn regret_examples() {
        assert_eq!(regret(7.0, 10.0), 3.0);
        assert_eq!(regret(4.5, 4.5), 0.0);
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(mode(&[3, 1, 3, 1, 2]), Some(1));
        assert_eq!(mode(&[]), None);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(sd(&[1.0]), 0.0);
        let s = summarize(
            "x",
            &[
                Outcome { value: 1.0, switch_epoch: Some(2) },
                Outcome { value: -1.0, switch_epoch: None },
                Outcome { value: 3.0, switch_epoch: Some(4) },
                Outcome { value: 2.0, switch_epoch: Some(2) },
            ],
        );
        assert_eq!(s.mean_stop_epoch, Some(8.0 / 3.0));
        assert_eq!(s.mode_stop_epoch, Some(2));
        assert_eq!(s.switch_freq + s.discard_freq, 1.0);
        assert_eq!(s.discard_freq, 0.25);
    }

    #[test]
    fn ceil_pow_snaps_exact_powers() {
        assert_eq!(ceil_pow(1 << 12, 2.0 / 3.0), 256);
        assert_eq!(ceil_pow(1 << 10, 2.0 / 3.0), 102);
        assert_eq!(ceil_pow(1 << 18, 2.0 / 3.0), 4096);
    }
}
