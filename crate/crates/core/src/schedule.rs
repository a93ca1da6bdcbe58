//! Epoch-schedule construction and the training-cost and responsiveness
//! analyses of uniform versus geometric schedules.

use crate::analytic::setting1_value;
use crate::error::{Error, Result};
use crate::model::{CostModel, EpochSchedule, PowerLawCurve, SampleFlow, ScheduleKind};

/// `{Λ, 2Λ, ...} ∩ [1, T]`.
pub fn build_uniform(step: u64, horizon: u64) -> Result<EpochSchedule> {
    if step == 0 {
        return Err(Error::Config("uniform step must be >= 1".into()));
    }
    if step > horizon {
        return Err(Error::EmptySchedule {
            first: step,
            horizon,
        });
    }
    let epochs = (1..=horizon / step).map(|k| k * step).collect();
    Ok(EpochSchedule::from_parts(epochs, ScheduleKind::Uniform { step }))
}

/// `t_k = ⌈Λ λ^{k-1}⌉`, deduplicated and capped at `T`.
pub fn build_geometric(first: u64, ratio: f64, horizon: u64) -> Result<EpochSchedule> {
    if first == 0 {
        return Err(Error::Config("geometric first epoch must be >= 1".into()));
    }
    if !(ratio > 1.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("geometric ratio must be > 1, got {ratio}")));
    }
    if first > horizon {
        return Err(Error::EmptySchedule {
            first,
            horizon,
        });
    }
    let mut epochs: Vec<u64> = Vec::new();
    let mut k = 0i32;
    loop {
        let x = first as f64 * ratio.powi(k);
        // λ^k is inexact for integer ratios; snap values within rounding of an integer
        let r = x.round();
        let t = if (x - r).abs() <= 1e-9 * x { r } else { x.ceil() };
        if t > horizon as f64 {
            break;
        }
        let t = t as u64;
        if epochs.last().is_none_or(|&last| t > last) {
            epochs.push(t);
        }
        k += 1;
    }
    Ok(EpochSchedule::from_parts(epochs, ScheduleKind::Geometric { first, ratio }))
}

/// Build a schedule of the given kind; `Explicit` is rejected.
pub fn build(kind: ScheduleKind, horizon: u64) -> Result<EpochSchedule> {
    match kind {
        ScheduleKind::Uniform { step } => build_uniform(step, horizon),
        ScheduleKind::Geometric { first, ratio } => build_geometric(first, ratio, horizon),
        ScheduleKind::Explicit => Err(Error::Config("explicit schedules carry their own epochs".into())),
    }
}

/// Total training cost `Σ_{t_k <= t*} C_train(N_{t_k})` and the retrain count.
pub fn total_training_cost(
    sched: &EpochSchedule,
    costs: &CostModel,
    flow: &SampleFlow,
    t_star: u64,
) -> Result<(f64, usize)> {
    let epochs = sched.up_to(t_star);
    let mut cost = 0.0;
    for &t in epochs {
        cost += costs.training_cost(flow.cumulative(t)?);
    }
    Ok((cost, epochs.len()))
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Domain("slope fit needs equal-length inputs".into()));
    }
    if xs.len() < 2 {
        return Err(Error::Domain("slope fit needs at least 2 points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(ls_slope(&lx, &ly))
}

pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fitted log-log exponent of total training cost against `t*` with unit
/// flow and unit training coefficient, training cost `N^q`.
pub fn scaling_exponent_check(kind: ScheduleKind, q: f64, t_star_grid: &[u64]) -> Result<f64> {
    if t_star_grid.len() < 3 {
        return Err(Error::Config(format!(
            "scaling fit needs at least 3 grid points, got {}",
            t_star_grid.len()
        )));
    }
    let horizon = *t_star_grid.iter().max().expect("nonempty");
    let sched = build(kind, horizon)?;
    let flow = SampleFlow::constant(1)?;
    let costs = CostModel {
        c_train: 1.0,
        q,
        train_mode: crate::model::TrainMode::PolynomialInN,
        ..Default::default()
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &t in t_star_grid {
        let (cost, _) = total_training_cost(&sched, &costs, &flow, t)?;
        xs.push(t as f64);
        ys.push(cost);
    }
    log_log_slope(&xs, &ys)
}

// ---------------------------------------------------------------------------
// Responsiveness
// ---------------------------------------------------------------------------

/// Finite-horizon undiscounted instance with symmetric per-sample cost `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting1Params {
    pub curve: PowerLawCurve,
    pub n: u64,
    pub horizon: u64,
    pub c: f64,
    pub c_s: f64,
}

impl Setting1Params {
    pub fn value(&self, t: f64) -> f64 {
        setting1_value(&self.curve, self.n, self.horizon, self.c, self.c_s, t)
    }
}

/// `W = V(t*) - max_{t_k <= T} V(t_k)`.
pub fn responsiveness_loss(sched: &EpochSchedule, params: &Setting1Params, t_star: f64) -> Result<f64> {
    let epochs = sched.up_to(params.horizon);
    if epochs.is_empty() {
        return Err(Error::EmptySchedule {
            first: sched.epochs().first().copied().unwrap_or(0),
            horizon: params.horizon,
        });
    }
    let best = epochs
        .iter()
        .map(|&t| params.value(t as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(params.value(t_star) - best)
}
