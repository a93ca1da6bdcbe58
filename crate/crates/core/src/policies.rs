//! Stopping policies as step functions over the observed estimates.
//!
//! All four policies share [`PolicyState`]: feed it one estimate per epoch in
//! order and it returns `Continue` until it stops. Once stopped, further
//! steps return the stored decision unchanged.
//!
//! Sequential policies (GSE, LSE, LSEc) charge training at every visited
//! epoch. OSE charges it only at its single evaluation epoch.

use crate::error::{Error, Result};
use crate::model::{Decision, Estimate, PolicyConfig};
use crate::schedule::ls_slope;
use crate::value::ValueContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// One-shot evaluation at a single epoch.
    Ose,
    /// Greedy confidence-band policy.
    Gse,
    /// Greedy policy that may deploy the previous challenger when stopping.
    GseModified,
    /// Look-ahead with a least-squares slope.
    Lse,
    /// Look-ahead with a confidence-adjusted finite difference.
    Lsec,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Ose,
        PolicyKind::Gse,
        PolicyKind::GseModified,
        PolicyKind::Lse,
        PolicyKind::Lsec,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Ose => "ose",
            PolicyKind::Gse => "gse",
            PolicyKind::GseModified => "gse_modified",
            PolicyKind::Lse => "lse",
            PolicyKind::Lsec => "lsec",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`; expected one of ose, gse, gse_modified, lse, lsec")))
    }

    /// Default look-ahead window: 3 for LSE, 2 otherwise.
    pub fn default_window(&self) -> usize {
        match self {
            PolicyKind::Lse => 3,
            _ => 2,
        }
    }

    pub fn is_sequential(&self) -> bool {
        !matches!(self, PolicyKind::Ose)
    }
}

/// Per-epoch record of what a policy saw and computed.
///
/// For the band policies `v_lb`/`v_ub` are the switching values at the
/// pessimistic and optimistic gaps. For the look-ahead policies `v_lb` is the
/// discard-now value and `v_ub` the best projected switching value over later
/// epochs (`-inf` at the last epoch). For OSE all three equal `v_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    pub t: u64,
    pub n_cum: u64,
    pub gap_estimate: f64,
    pub v_lb: f64,
    pub v_hat: f64,
    pub v_ub: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    kind: PolicyKind,
    config: PolicyConfig,
    history: Vec<Estimate>,
    stopped: Option<Decision>,
    trace: Vec<EpochTrace>,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, config: PolicyConfig, schedule_len: usize) -> Result<Self> {
        config.validate(schedule_len)?;
        Ok(Self {
            kind,
            config,
            history: Vec::with_capacity(schedule_len),
            stopped: None,
            trace: Vec::with_capacity(schedule_len),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn history(&self) -> &[Estimate] {
        &self.history
    }

    pub fn decision(&self) -> Option<Decision> {
        self.stopped
    }

    pub fn trace(&self) -> &[EpochTrace] {
        &self.trace
    }

    /// Feed the estimate for the next epoch.
    pub fn step(&mut self, ctx: &ValueContext, est: Estimate) -> Result<Decision> {
        if let Some(d) = self.stopped {
            return Ok(d);
        }
        let expected = self.history.len() + 1;
        if est.epoch_index != expected {
            return Err(Error::Sequencing {
                expected,
                got: est.epoch_index,
            });
        }
        match ctx.schedule().time(expected) {
            Some(t) if t == est.time_step => {}
            Some(t) => {
                return Err(Error::Validation(format!(
                    "estimate for epoch {expected} is at step {}, schedule says {t}",
                    est.time_step
                )))
            }
            None => {
                return Err(Error::Validation(format!(
                    "estimate for epoch {expected} beyond the {}-epoch schedule",
                    ctx.schedule().len()
                )))
            }
        }
        self.history.push(est);
        let row = match self.kind {
            PolicyKind::Ose => self.ose(ctx)?,
            PolicyKind::Gse | PolicyKind::GseModified => self.gse(ctx)?,
            PolicyKind::Lse | PolicyKind::Lsec => self.lse(ctx)?,
        };
        if row.decision.is_terminal() {
            self.stopped = Some(row.decision);
        }
        self.trace.push(row);
        Ok(row.decision)
    }

    fn is_last(&self, ctx: &ValueContext) -> bool {
        self.history.len() == ctx.schedule().len()
    }

    fn current(&self) -> Estimate {
        *self.history.last().expect("step pushed an estimate")
    }

    fn visited<'a>(&self, ctx: &'a ValueContext) -> &'a [u64] {
        &ctx.schedule().epochs()[..self.history.len()]
    }

    fn ose(&self, ctx: &ValueContext) -> Result<EpochTrace> {
        let e = self.current();
        let target = self.config.ose_epoch_index.unwrap_or(ctx.schedule().len());
        let v_hat = ctx.value_switch(e.time_step, e.gap, &[e.time_step])?.total();
        let decision = if e.epoch_index == target {
            ose_decide(ctx, &e)?
        } else {
            Decision::Continue
        };
        Ok(trace_row(&e, v_hat, v_hat, v_hat, decision))
    }

    fn gse(&self, ctx: &ValueContext) -> Result<EpochTrace> {
        let e = self.current();
        let k = e.epoch_index;
        let train = self.visited(ctx);
        let delta = self.config.delta(e.cumulative);
        let v_lb = ctx.value_switch(e.time_step, e.gap - delta, train)?.total();
        let v_hat = ctx.value_switch(e.time_step, e.gap, train)?.total();
        let v_ub = ctx.value_switch(e.time_step, e.gap + delta, train)?.total();
        let decision = if v_lb > 0.0 {
            Decision::Switch {
                epoch_index: k,
                challenger_epoch_index: k,
            }
        } else if v_ub < 0.0 || self.is_last(ctx) {
            self.gse_stop(ctx, &e, delta)?
        } else {
            Decision::Continue
        };
        Ok(trace_row(&e, v_lb, v_hat, v_ub, decision))
    }

    /// Stop branch: deploy if the pessimistic incremental value is positive.
    fn gse_stop(&self, ctx: &ValueContext, e: &Estimate, delta: f64) -> Result<Decision> {
        let k = e.epoch_index;
        let mut best_k = k;
        let mut best = ctx.delta_v(e.time_step, e.gap - delta)?;
        if self.kind == PolicyKind::GseModified && k >= 2 {
            let prev = self.history[k - 2];
            let lb_prev = ctx.delta_v(e.time_step, prev.gap - self.config.delta(prev.cumulative))?;
            // ties keep the current challenger
            if lb_prev > best {
                best = lb_prev;
                best_k = k - 1;
            }
        }
        Ok(if best > 0.0 {
            Decision::Switch {
                epoch_index: k,
                challenger_epoch_index: best_k,
            }
        } else {
            Decision::Discard { epoch_index: k }
        })
    }

    fn lse(&self, ctx: &ValueContext) -> Result<EpochTrace> {
        let e = self.current();
        let k = e.epoch_index;
        let train = self.visited(ctx);
        let v_hat = ctx.value_switch(e.time_step, e.gap, train)?.total();
        let discard_now = ctx.value_discard(e.time_step, train)?;
        let last = self.is_last(ctx);
        let w = self.config.window;
        if k < w && !last {
            return Ok(trace_row(&e, discard_now, v_hat, f64::NAN, Decision::Continue));
        }
        let mut best_ub = f64::NEG_INFINITY;
        if !last {
            let slope = self.slope(k)?;
            let epochs = ctx.schedule().epochs();
            for &t_next in &epochs[k..] {
                let n_next = ctx.flow().cumulative(t_next)?;
                let g_ub = e.gap + (1.0 - self.config.rho) * (n_next - e.cumulative) as f64 * slope;
                let train_next = ctx.schedule().up_to(t_next);
                let v = ctx.value_switch(t_next, g_ub, train_next)?.total();
                best_ub = best_ub.max(v);
            }
        }
        let decision = if last || v_hat.max(discard_now) >= best_ub {
            if ctx.delta_v(e.time_step, e.gap)? > 0.0 {
                Decision::Switch {
                    epoch_index: k,
                    challenger_epoch_index: k,
                }
            } else {
                Decision::Discard { epoch_index: k }
            }
        } else {
            Decision::Continue
        };
        Ok(trace_row(&e, discard_now, v_hat, best_ub, decision))
    }

    fn slope(&self, k: usize) -> Result<f64> {
        let rho = self.config.rho;
        match self.kind {
            PolicyKind::Lse => {
                let w = self.config.window.min(k);
                let window: Vec<(u64, f64)> = self.history[k - w..k].iter().map(|e| (e.cumulative, e.gap)).collect();
                lse_slope(&window, rho)
            }
            PolicyKind::Lsec => {
                let prev = &self.history[k - 2];
                let cur = &self.history[k - 1];
                lsec_slope((prev.cumulative, prev.gap), (cur.cumulative, cur.gap), rho, self.config.delta(cur.cumulative))
            }
            _ => unreachable!("slope only for look-ahead policies"),
        }
    }
}

fn trace_row(e: &Estimate, v_lb: f64, v_hat: f64, v_ub: f64, decision: Decision) -> EpochTrace {
    EpochTrace {
        epoch: e.epoch_index,
        t: e.time_step,
        n_cum: e.cumulative,
        gap_estimate: e.gap,
        v_lb,
        v_hat,
        v_ub,
        decision,
    }
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// One-shot rule: switch iff `ΔV̂(t_k) > 0`.
pub fn ose_decide(ctx: &ValueContext, est: &Estimate) -> Result<Decision> {
    Ok(if ctx.delta_v(est.time_step, est.gap)? > 0.0 {
        Decision::Switch {
            epoch_index: est.epoch_index,
            challenger_epoch_index: est.epoch_index,
        }
    } else {
        Decision::Discard {
            epoch_index: est.epoch_index,
        }
    })
}

/// Least-squares slope of the gap on training-set size `(1-ρ) N`, with a
/// monotonicity correction (a strictly decreasing window has slope 0) and
/// clamped at 0.
pub fn lse_slope(window: &[(u64, f64)], rho: f64) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::Domain(format!("slope window needs >= 2 points, got {}", window.len())));
    }
    if window.windows(2).all(|p| p[1].1 < p[0].1) {
        return Ok(0.0);
    }
    let x: Vec<f64> = window.iter().map(|&(n, _)| (1.0 - rho) * n as f64).collect();
    let y: Vec<f64> = window.iter().map(|&(_, g)| g).collect();
    let s = ls_slope(&x, &y);
    if !s.is_finite() {
        return Err(Error::Domain("slope window has no spread in sample counts".into()));
    }
    Ok(s.max(0.0))
}

/// Confidence-adjusted finite difference over the last two epochs.
pub fn lsec_slope(prev: (u64, f64), cur: (u64, f64), rho: f64, delta: f64) -> Result<f64> {
    if cur.0 <= prev.0 {
        return Err(Error::Domain(format!(
            "degenerate schedule: sample count {} does not exceed {}",
            cur.0, prev.0
        )));
    }
    let run = (1.0 - rho) * (cur.0 - prev.0) as f64;
    let rise = cur.1 - prev.1;
    Ok(if rise < 0.0 {
        2.0 * delta / run
    } else {
        (rise + 2.0 * delta) / run
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostModel, DiscountSpec, EpochSchedule, Horizon, SampleFlow};
    use proptest::prelude::*;

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

    fn est(k: usize, t: u64, gap: f64) -> Estimate {
        Estimate {
            epoch_index: k,
            time_step: t,
            cumulative: t,
            gap,
        }
    }

    fn cfg(gamma: f64) -> PolicyConfig {
        PolicyConfig {
            rho: 0.5,
            gamma,
            window: 2,
            ose_epoch_index: None,
        }
    }

    #[test]
    fn ose_examples() {
        let cs = CostModel {
            c_s: 0.1,
            ..Default::default()
        };
        let c = ctx(5, vec![2], cs);
        assert!(matches!(ose_decide(&c, &est(1, 2, 0.0)).unwrap(), Decision::Discard { .. }));
        assert!(matches!(ose_decide(&c, &est(1, 2, 0.5)).unwrap(), Decision::Switch { .. }));
        assert!((c.delta_v(2, 0.5).unwrap() - 1.4).abs() < 1e-12);
        // ΔV̂ exactly zero
        let c0 = ctx(5, vec![2], CostModel::default());
        assert!(matches!(ose_decide(&c0, &est(1, 2, 0.0)).unwrap(), Decision::Discard { .. }));
    }

    #[test]
    fn gse_examples() {
        // δ = γ/sqrt(ρN) = 0.1 with N = 50, ρ = 0.5 → γ = 0.5
        let c = ValueContext::new(
            SampleFlow::constant(50).unwrap(),
            Horizon::finite(100).unwrap(),
            DiscountSpec::new(1.0).unwrap(),
            CostModel::default(),
            EpochSchedule::explicit(vec![1, 2, 3], Some(100)).unwrap(),
        )
        .unwrap();
        let mut s = PolicyState::new(PolicyKind::Gse, cfg(0.5), 3).unwrap();
        let e = Estimate {
            epoch_index: 1,
            time_step: 1,
            cumulative: 50,
            gap: 0.5,
        };
        assert_eq!(
            s.step(&c, e).unwrap(),
            Decision::Switch {
                epoch_index: 1,
                challenger_epoch_index: 1
            }
        );
        assert!((s.trace()[0].v_lb - 99.0 * 50.0 * 0.4).abs() < 1e-9);

        // sunk costs large, gap below the post-cost hurdle even optimistically
        let costs = CostModel {
            c_acq_pre: 1.0,
            c_acq_post: 1.0,
            ..Default::default()
        };
        let c = ctx(10, vec![1, 2, 3], costs);
        let mut s = PolicyState::new(PolicyKind::Gse, cfg(0.1), 3).unwrap();
        assert_eq!(s.step(&c, est(1, 1, 0.2)).unwrap(), Decision::Discard { epoch_index: 1 });

        // wide bands straddle zero
        let c = ctx(10, vec![1, 2, 3], CostModel::default());
        let mut s = PolicyState::new(PolicyKind::Gse, cfg(10.0), 3).unwrap();
        assert_eq!(s.step(&c, est(1, 1, 0.2)).unwrap(), Decision::Continue);
        assert_eq!(s.step(&c, est(2, 2, 0.2)).unwrap(), Decision::Continue);
        // forced terminal decision
        let d = s.step(&c, est(3, 3, 0.2)).unwrap();
        assert_eq!(d, Decision::Discard { epoch_index: 3 });
    }

    #[test]
    fn sequencing_and_irreversibility() {
        let c = ctx(10, vec![1, 2, 3], CostModel::default());
        let mut s = PolicyState::new(PolicyKind::Gse, cfg(10.0), 3).unwrap();
        assert_eq!(
            s.step(&c, est(2, 2, 0.1)),
            Err(Error::Sequencing { expected: 1, got: 2 })
        );
        let mut s = PolicyState::new(PolicyKind::Gse, cfg(0.0), 3).unwrap();
        let d = s.step(&c, est(1, 1, 0.5)).unwrap();
        assert!(d.is_terminal());
        let before = s.clone();
        assert_eq!(s.step(&c, est(2, 2, -5.0)).unwrap(), d);
        assert_eq!(s, before);
    }

    #[test]
    fn modified_gse_picks_previous_challenger() {
        let c = ctx(10, vec![1, 2], CostModel::default());
        let mut s = PolicyState::new(PolicyKind::GseModified, cfg(100.0), 2).unwrap();
        assert_eq!(s.step(&c, est(1, 1, 0.9)).unwrap(), Decision::Continue);
        // δ at N=1 is 141; at N=2 it is 100: previous bound 0.9-141 < 0.95-100
        let d = s.step(&c, est(2, 2, 0.95)).unwrap();
        assert_eq!(d, Decision::Discard { epoch_index: 2 });

    }

    #[test]
    fn modified_gse_prefers_higher_bound_and_breaks_ties_to_current() {
        // heavy pre-cost keeps epoch 1 undecided; δ_1 = 0.25 and δ_2 = 0.125 exactly
        let costs = CostModel {
            c_acq_pre: 7.0,
            c_acq_post: 0.3,
            ..Default::default()
        };
        let c = ValueContext::new(
            SampleFlow::constant(100).unwrap(),
            Horizon::finite(20).unwrap(),
            DiscountSpec::new(1.0).unwrap(),
            costs,
            EpochSchedule::explicit(vec![1, 2], Some(20)).unwrap(),
        )
        .unwrap();
        let cfg = PolicyConfig {
            rho: 0.5,
            gamma: 1.0,
            window: 2,
            ose_epoch_index: None,
        };
        let run = |g1: f64, g2: f64| {
            let mut s = PolicyState::new(PolicyKind::GseModified, cfg, 2).unwrap();
            let e1 = Estimate { epoch_index: 1, time_step: 1, cumulative: 32, gap: g1 };
            let e2 = Estimate { epoch_index: 2, time_step: 2, cumulative: 128, gap: g2 };
            assert_eq!(s.step(&c, e1).unwrap(), Decision::Continue);
            s.step(&c, e2).unwrap()
        };
        assert_eq!(run(0.875, 0.7), Decision::Switch { epoch_index: 2, challenger_epoch_index: 1 });
        assert_eq!(run(0.875, 0.75), Decision::Switch { epoch_index: 2, challenger_epoch_index: 2 });
        assert_eq!(run(0.875, 0.8), Decision::Switch { epoch_index: 2, challenger_epoch_index: 2 });
        // plain GSE never looks back
        let mut s = PolicyState::new(PolicyKind::Gse, cfg, 2).unwrap();
        s.step(&c, Estimate { epoch_index: 1, time_step: 1, cumulative: 32, gap: 0.875 }).unwrap();
        let d = s.step(&c, Estimate { epoch_index: 2, time_step: 2, cumulative: 128, gap: 0.3 }).unwrap();
        assert_eq!(d, Decision::Discard { epoch_index: 2 });
    }

    #[test]
    fn slope_examples() {
        assert_eq!(lse_slope(&[(100, 0.5), (200, 0.4), (300, 0.3)], 0.5).unwrap(), 0.0);
        let s = lse_slope(&[(100, 0.4), (300, 0.5)], 0.5).unwrap();
        assert!((s - 0.001).abs() < 1e-15);
        let s = lse_slope(&[(0, 0.1), (10, 0.2), (20, 0.3)], 0.0).unwrap();
        assert!((s - 0.01).abs() < 1e-15);
        assert!(lse_slope(&[(1, 0.1)], 0.5).is_err());

        // ((0.5 + 0.05) - (0.4 - 0.05)) / 100
        let s = lsec_slope((100, 0.4), (300, 0.5), 0.5, 0.05).unwrap();
        assert!((s - 0.002).abs() < 1e-15);
        let s = lsec_slope((100, 0.4), (300, 0.3), 0.5, 0.05).unwrap();
        assert!((s - 0.001).abs() < 1e-15);
        let s = lsec_slope((100, 0.4), (300, 0.5), 0.5, 0.0).unwrap();
        assert!((s - 0.001).abs() < 1e-15);
        assert!(lsec_slope((100, 0.4), (100, 0.5), 0.5, 0.0).is_err());
    }

    #[test]
    fn lse_zero_slope_stops_at_window() {
        let c = ctx(20, vec![1, 2, 3, 4, 5], CostModel::default());
        let config = PolicyConfig {
            window: 3,
            ..cfg(0.0)
        };
        for (gap, switch) in [(0.3, true), (-0.1, false)] {
            let mut s = PolicyState::new(PolicyKind::Lse, config, 5).unwrap();
            assert_eq!(s.step(&c, est(1, 1, gap + 0.2)).unwrap(), Decision::Continue);
            assert_eq!(s.step(&c, est(2, 2, gap + 0.1)).unwrap(), Decision::Continue);
            let d = s.step(&c, est(3, 3, gap)).unwrap();
            assert_eq!(matches!(d, Decision::Switch { .. }), switch);
            assert!(d.is_terminal());
        }
    }

    #[test]
    fn lse_steep_slope_continues_then_forced() {
        let c = ctx(1000, vec![1, 2, 3], CostModel::default());
        let mut s = PolicyState::new(PolicyKind::Lsec, cfg(0.0), 3).unwrap();
        assert_eq!(s.step(&c, est(1, 1, 0.1)).unwrap(), Decision::Continue);
        assert_eq!(s.step(&c, est(2, 2, 0.3)).unwrap(), Decision::Continue);
        assert_eq!(
            s.step(&c, est(3, 3, 0.31)).unwrap(),
            Decision::Switch {
                epoch_index: 3,
                challenger_epoch_index: 3
            }
        );
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(PolicyKind::parse(k.name()).unwrap(), k);
        }
        assert!(PolicyKind::parse("nope").is_err());
    }

    proptest! {
        #[test]
        fn lsec_dominates_lse(
            n1 in 1u64..10_000, dn in 1u64..10_000, g1 in -1.0f64..1.0, g2 in -1.0f64..1.0,
            rho in 0.05f64..0.95, delta in 0.0f64..0.5,
        ) {
            let a = (n1, g1);
            let b = (n1 + dn, g2);
            let lse = lse_slope(&[a, b], rho).unwrap();
            let lsec = lsec_slope(a, b, rho, delta).unwrap();
            prop_assert!(lsec >= lse);
        }

        #[test]
        fn gse_band_ordering(gap in -1.0f64..1.0, gamma in 0.0f64..3.0, t in 1u64..9) {
            let c = ctx(10, (1..=9).collect(), CostModel { c_s: 0.2, c_acq_pre: 0.01, ..Default::default() });
            let mut s = PolicyState::new(PolicyKind::Gse, cfg(gamma), 9).unwrap();
            for k in 1..t {
                s.history.push(est(k as usize, k, 0.0));
            }
            s.step(&c, est(t as usize, t, gap)).unwrap();
            let row = s.trace().last().unwrap();
            prop_assert!(row.v_lb <= row.v_hat && row.v_hat <= row.v_ub);
            prop_assert_eq!(row.v_lb == row.v_ub, gamma == 0.0);
        }

        #[test]
        fn larger_gamma_never_adds_a_switch(
            gaps in proptest::collection::vec(-0.5f64..1.0, 5), g1 in 0.0f64..2.0, dg in 0.0f64..2.0, k in 1usize..=5,
        ) {
            let epochs = [1u64, 2, 4, 8, 16];
            let c = ctx(30, epochs.to_vec(), CostModel { c_s: 0.5, ..Default::default() });
            let at_prefix = |gamma: f64| {
                let mut s = PolicyState::new(PolicyKind::Gse, cfg(gamma), 5).unwrap();
                for i in 0..k - 1 {
                    s.history.push(est(i + 1, epochs[i], gaps[i]));
                }
                s.step(&c, est(k, epochs[k - 1], gaps[k - 1])).unwrap()
            };
            let lo = at_prefix(g1);
            let hi = at_prefix(g1 + dg);
            let lo_switch = matches!(lo, Decision::Switch { .. });
            if matches!(hi, Decision::Switch { .. }) {
                prop_assert!(lo_switch);
            }
            if lo == Decision::Continue {
                prop_assert_eq!(hi, Decision::Continue);
            }
        }
    }
}
