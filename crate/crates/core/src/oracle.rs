//! Full-foresight benchmarks.
//!
//! Both oracles pay training only at their switching step and value a
//! discard as 0 (walking away before any data is bought).

use crate::error::{Error, Result};
use crate::model::{Decision, GapCurve, GapPath, Horizon};
use crate::value::ValueContext;

/// Hard cap on the infinite-horizon scan.
pub const MAX_ORACLE_SCAN: u64 = 10_000_000;

/// Oracle that knows the true gap curve and may switch at any step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricOracle {
    /// Switching step, `None` for discard.
    pub t_star: Option<u64>,
    pub value: f64,
}

/// Oracle that knows the realised post-switch gaps of every challenger and
/// may switch at any decision epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOracle {
    pub decision: Decision,
    pub stop_time: Option<u64>,
    pub value: f64,
}

impl PathOracle {
    pub fn stop_epoch(&self) -> Option<usize> {
        match self.decision {
            Decision::Switch { epoch_index, .. } => Some(epoch_index),
            _ => None,
        }
    }
}

/// Upper bound on the gap, used to end infinite-horizon scans.
fn gap_sup(curve: &GapCurve) -> f64 {
    match curve {
        GapCurve::PowerLaw(c) => c.g_star,
        GapCurve::Tabulated(_) => f64::INFINITY,
    }
}

/// `argmax_t V_switch(t)` with the true curve, training charged only at `t`.
/// Ties go to the smallest `t`; a nonpositive maximum means discard.
pub fn parametric_oracle(ctx: &ValueContext, curve: &GapCurve) -> Result<ParametricOracle> {
    let mut best = ParametricOracle {
        t_star: None,
        value: 0.0,
    };
    let consider = |best: &mut ParametricOracle, t: u64| -> Result<()> {
        let v = ctx.value_switch(t, curve.gap(ctx.flow(), t)?, &[t])?.total();
        if v > best.value {
            *best = ParametricOracle {
                t_star: Some(t),
                value: v,
            };
        }
        Ok(())
    };
    match ctx.horizon() {
        Horizon::Finite(end) => {
            let end = curve.max_step().map_or(end, |m| m.min(end));
            for t in 1..=end {
                consider(&mut best, t)?;
            }
        }
        Horizon::Infinite => {
            if curve.max_step().is_some() {
                return Err(Error::Config("tabulated curves need a finite horizon".into()));
            }
            let margin = (gap_sup(curve) - ctx.costs().c_acq_post).max(0.0);
            let mut t = 1u64;
            loop {
                consider(&mut best, t)?;
                // later steps pay at least the acquisition cost to t and gain at most the tail
                let bound = -ctx.pre_cost_to(t, &[])? + margin * ctx.discounted_samples(t, None);
                if bound <= best.value || bound < ctx.tail_tolerance() {
                    break;
                }
                t += 1;
                if t > MAX_ORACLE_SCAN {
                    return Err(Error::ResourceGuard(format!(
                        "oracle scan exceeded {MAX_ORACLE_SCAN} steps"
                    )));
                }
            }
        }
    }
    Ok(best)
}

/// Switching value at epoch `t_k` under the realised gaps of challenger `k`.
pub fn path_switch_value(ctx: &ValueContext, path: &GapPath, epoch_index: usize) -> Result<f64> {
    let fg = path
        .future_gaps
        .as_ref()
        .ok_or_else(|| Error::Config("path oracle needs future gaps".into()))?;
    let est = path.estimates.get(epoch_index.wrapping_sub(1)).ok_or_else(|| {
        Error::Validation(format!("path has no epoch {epoch_index}"))
    })?;
    let row = fg
        .row(epoch_index)
        .ok_or_else(|| Error::Validation(format!("no future gaps for challenger {epoch_index}")))?;
    let t = est.time_step;
    let pre = ctx.pre_cost_to(t, &[t])?;
    let post = ctx.post_net_with(t, |tau| {
        row.gap(tau).ok_or_else(|| {
            Error::Validation(format!("future gaps for challenger {epoch_index} miss step {tau}"))
        })
    })?;
    Ok(-pre - ctx.discount().factor(t) * ctx.costs().c_s + post)
}

/// Best epoch under the realised gap matrix; discard (value 0) if no epoch
/// has positive value. Ties go to the earliest epoch.
pub fn path_oracle(ctx: &ValueContext, path: &GapPath) -> Result<PathOracle> {
    if path.future_gaps.is_none() {
        return Err(Error::Config("path oracle needs future gaps".into()));
    }
    let mut best = PathOracle {
        decision: Decision::Discard { epoch_index: 0 },
        stop_time: None,
        value: 0.0,
    };
    for e in &path.estimates {
        let v = path_switch_value(ctx, path, e.epoch_index)?;
        if v > best.value {
            best = PathOracle {
                decision: Decision::Switch {
                    epoch_index: e.epoch_index,
                    challenger_epoch_index: e.epoch_index,
                },
                stop_time: Some(e.time_step),
                value: v,
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        CostModel, DiscountSpec, EpochSchedule, Estimate, FutureGaps, FutureRow, PowerLawCurve, SampleFlow,
        TabulatedCurve,
    };

    fn ctx(t_max: u64, beta: f64, epochs: Vec<u64>, costs: CostModel) -> ValueContext {
        ValueContext::new(
            SampleFlow::constant(1).unwrap(),
            Horizon::finite(t_max).unwrap(),
            DiscountSpec::new(beta).unwrap(),
            costs,
            EpochSchedule::explicit(epochs, Some(t_max)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn parametric_examples() {
        let c = ctx(10, 1.0, vec![1], CostModel::default());
        let neg = GapCurve::Tabulated(TabulatedCurve::new(vec![-0.1; 10]).unwrap());
        let r = parametric_oracle(&c, &neg).unwrap();
        assert_eq!(r, ParametricOracle { t_star: None, value: 0.0 });

        let c = ctx(100, 1.0, vec![1], CostModel::default());
        let curve: GapCurve = PowerLawCurve::new(1.0, 1.0, 1.0).unwrap().into();
        let r = parametric_oracle(&c, &curve).unwrap();
        assert_eq!(r.t_star, Some(10));
        assert!((r.value - 81.0).abs() < 1e-9);

        let inf = ValueContext::new(
            SampleFlow::constant(1).unwrap(),
            Horizon::Infinite,
            DiscountSpec::new(0.9).unwrap(),
            CostModel::default(),
            EpochSchedule::explicit(vec![1], None).unwrap(),
        )
        .unwrap();
        let r = parametric_oracle(&inf, &curve).unwrap();
        assert_eq!(r.t_star, Some(4));
    }

    fn toy_path() -> GapPath {
        GapPath {
            estimates: vec![
                Estimate { epoch_index: 1, time_step: 1, cumulative: 1, gap: 0.0 },
                Estimate { epoch_index: 2, time_step: 2, cumulative: 2, gap: 0.0 },
            ],
            future_gaps: Some(FutureGaps {
                rows: vec![
                    FutureRow { first_step: 2, gaps: vec![0.1, 0.1] },
                    FutureRow { first_step: 3, gaps: vec![0.5] },
                ],
            }),
        }
    }

    #[test]
    fn path_oracle_toy() {
        let c = ctx(3, 1.0, vec![1, 2], CostModel::default());
        let p = toy_path();
        assert!((path_switch_value(&c, &p, 1).unwrap() - 0.2).abs() < 1e-15);
        assert!((path_switch_value(&c, &p, 2).unwrap() - 0.5).abs() < 1e-15);
        let r = path_oracle(&c, &p).unwrap();
        assert_eq!(r.stop_epoch(), Some(2));
        assert_eq!(r.stop_time, Some(2));
    }

    #[test]
    fn path_oracle_flat_matrix_matches_parametric() {
        let c = ctx(6, 0.9, vec![1, 2, 3, 4, 5], CostModel { c_s: 0.05, ..Default::default() });
        let g = 0.3;
        let estimates: Vec<Estimate> = (1..=5)
            .map(|k| Estimate { epoch_index: k, time_step: k as u64, cumulative: k as u64, gap: g })
            .collect();
        let rows = (1..=5u64).map(|k| FutureRow { first_step: k + 1, gaps: vec![g; (6 - k) as usize] }).collect();
        let p = GapPath { estimates, future_gaps: Some(FutureGaps { rows }) };
        let flat = GapCurve::Tabulated(TabulatedCurve::new(vec![g; 6]).unwrap());
        let a = path_oracle(&c, &p).unwrap();
        let b = parametric_oracle(&c, &flat).unwrap();
        assert_eq!(a.stop_time, b.t_star);
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn path_oracle_negative_discards() {
        let c = ctx(3, 1.0, vec![1, 2], CostModel::default());
        let mut p = toy_path();
        for row in &mut p.future_gaps.as_mut().unwrap().rows {
            row.gaps.iter_mut().for_each(|g| *g = -1.0);
        }
        let r = path_oracle(&c, &p).unwrap();
        assert_eq!(r.decision, Decision::Discard { epoch_index: 0 });
        assert_eq!(r.value, 0.0);
        p.future_gaps = None;
        assert!(matches!(path_oracle(&c, &p), Err(Error::Config(_))));
    }
}
