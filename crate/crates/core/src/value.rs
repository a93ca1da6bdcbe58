//! Discounted present values of switching and discarding, valued at step 0.
//!
//! Finite horizons with explicit batch lists use a cached prefix of
//! `β^τ n_τ`. Constant flows, and every infinite-horizon sum, use the exact
//! geometric-series closed form; there is no truncation in this module.

use crate::error::{Error, Result};
use crate::model::{
    CostModel, DiscountSpec, EpochSchedule, Horizon, PowerLawCurve, SampleFlow, TrainMode,
    ValueBreakdown,
};

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Economic environment for value computations.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueContext {
    flow: SampleFlow,
    horizon: Horizon,
    discount: DiscountSpec,
    costs: CostModel,
    schedule: EpochSchedule,
    tail_tolerance: f64,
    // Σ_{τ<=t} β^τ n_τ for t = 0..=T, explicit flows only.
    disc_prefix: Vec<f64>,
}

impl ValueContext {
    pub fn new(
        flow: SampleFlow,
        horizon: Horizon,
        discount: DiscountSpec,
        costs: CostModel,
        schedule: EpochSchedule,
    ) -> Result<Self> {
        costs.validate()?;
        match horizon {
            Horizon::Infinite => {
                if discount.beta() >= 1.0 {
                    return Err(Error::Config("infinite horizon requires beta < 1".into()));
                }
                if flow.constant_n().is_none() {
                    return Err(Error::Config(
                        "infinite horizon requires a constant sample flow".into(),
                    ));
                }
            }
            Horizon::Finite(t) => {
                if t < 2 {
                    return Err(Error::Config(format!("finite horizon must be >= 2, got {t}")));
                }
                if let Some(len) = flow.len() {
                    if len < t {
                        return Err(Error::Config(format!(
                            "sample flow covers {len} steps but the horizon is {t}"
                        )));
                    }
                }
                if schedule.last() > t {
                    return Err(Error::Config(format!(
                        "schedule epoch {} exceeds horizon {t}",
                        schedule.last()
                    )));
                }
            }
        }
        let disc_prefix = match (flow.constant_n(), horizon) {
            (None, Horizon::Finite(t)) => {
                let mut prefix = Vec::with_capacity(t as usize + 1);
                let mut acc = 0.0;
                prefix.push(acc);
                for tau in 1..=t {
                    acc += discount.factor(tau) * flow.batch(tau)? as f64;
                    prefix.push(acc);
                }
                prefix
            }
            _ => Vec::new(),
        };
        Ok(Self {
            flow,
            horizon,
            discount,
            costs,
            schedule,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            disc_prefix,
        })
    }

    pub fn with_tail_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tail tolerance must be > 0, got {tol}")));
        }
        self.tail_tolerance = tol;
        Ok(self)
    }

    /// Same environment with different costs.
    pub fn with_costs(&self, costs: CostModel) -> Result<Self> {
        costs.validate()?;
        let mut next = self.clone();
        next.costs = costs;
        Ok(next)
    }

    /// Same environment with a different discount factor.
    pub fn with_discount(&self, discount: DiscountSpec) -> Result<Self> {
        Self::new(
            self.flow.clone(),
            self.horizon,
            discount,
            self.costs,
            self.schedule.clone(),
        )
        .and_then(|c| c.with_tail_tolerance(self.tail_tolerance))
    }

    pub fn flow(&self) -> &SampleFlow {
        &self.flow
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn discount(&self) -> DiscountSpec {
        self.discount
    }

    pub fn beta(&self) -> f64 {
        self.discount.beta()
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn schedule(&self) -> &EpochSchedule {
        &self.schedule
    }

    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tolerance
    }

    fn check_step(&self, t: u64) -> Result<()> {
        if t == 0 {
            return Err(Error::Bounds {
                t,
                max: self.horizon.steps().unwrap_or(u64::MAX),
            });
        }
        if let Horizon::Finite(max) = self.horizon {
            if t > max {
                return Err(Error::Bounds { t, max });
            }
        }
        Ok(())
    }

    /// `Σ_{τ=a+1}^{b} β^τ`, with `b = None` meaning the end of the horizon.
    fn discount_sum(&self, a: u64, b: Option<u64>) -> f64 {
        let beta = self.beta();
        let end = b.or(self.horizon.steps());
        if beta == 1.0 {
            let end = end.expect("beta = 1 only with finite horizon");
            return end.saturating_sub(a) as f64;
        }
        let lead = beta.powf((a + 1) as f64);
        let one_minus = 1.0 - beta;
        match end {
            None => lead / one_minus,
            Some(end) if end <= a => 0.0,
            Some(end) => {
                let m = (end - a) as f64;
                // 1 - β^m without cancellation
                let tail = -(m * beta.ln()).exp_m1();
                lead * tail / one_minus
            }
        }
    }

    /// `Σ_{τ=a+1}^{b} β^τ n_τ`, with `b = None` meaning the end of the horizon.
    pub fn discounted_samples(&self, a: u64, b: Option<u64>) -> f64 {
        match self.flow.constant_n() {
            Some(n) => n as f64 * self.discount_sum(a, b),
            None => {
                let end = b.or(self.horizon.steps()).expect("explicit flows have finite horizon");
                if end <= a {
                    return 0.0;
                }
                self.disc_prefix[end as usize] - self.disc_prefix[a as usize]
            }
        }
    }

    /// Discounted training cost charged at the epochs in `train_at` that are `<= t`.
    fn discounted_training(&self, t: u64, train_at: &[u64]) -> Result<f64> {
        if self.costs.c_train == 0.0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for &tau in train_at.iter().filter(|&&tau| tau <= t) {
            if tau == 0 {
                return Err(Error::Bounds { t: tau, max: t });
            }
            let n_cum = self.flow.cumulative(tau)?;
            acc += self.discount.factor(tau) * self.costs.training_cost(n_cum);
        }
        Ok(acc)
    }

    /// Discounted cumulative pre-decision cost `Σ_{τ<=t} β^τ C_pre(τ)`.
    ///
    /// Training is charged only at the steps listed in `train_at`; entries
    /// beyond `t` are ignored.
    pub fn pre_cost_to(&self, t: u64, train_at: &[u64]) -> Result<f64> {
        self.check_step(t)?;
        let acq = if self.costs.c_acq_pre == 0.0 {
            0.0
        } else {
            self.costs.c_acq_pre * self.discounted_samples(0, Some(t))
        };
        Ok(acq + self.discounted_training(t, train_at)?)
    }

    /// Value of switching at `t` to a challenger with per-sample gap `gap_at_t`.
    pub fn value_switch(&self, t: u64, gap_at_t: f64, train_at: &[u64]) -> Result<ValueBreakdown> {
        let pre = self.pre_cost_to(t, train_at)?;
        let switch = self.discount.factor(t) * self.costs.c_s;
        let post = self.post_net(t, gap_at_t);
        Ok(ValueBreakdown::new(pre, switch, post))
    }

    /// Discounted post-decision net gain `Σ_{τ>t} β^τ n_τ (gap - c_acq_post)`.
    pub fn post_net(&self, t: u64, gap: f64) -> f64 {
        let margin = gap - self.costs.c_acq_post;
        if margin == 0.0 {
            return 0.0;
        }
        margin * self.discounted_samples(t, None)
    }

    /// `Σ_{τ=t+1}^{T} β^τ n_τ (g(τ) - c_acq_post)` for a per-step gap
    /// sequence. Finite horizons only.
    pub fn post_net_with(&self, t: u64, mut g: impl FnMut(u64) -> Result<f64>) -> Result<f64> {
        let end = self
            .horizon
            .steps()
            .ok_or_else(|| Error::Config("time-varying post-switch gaps need a finite horizon".into()))?;
        let beta = self.beta();
        let c_post = self.costs.c_acq_post;
        let mut acc = 0.0;
        for tau in (t + 1)..=end {
            let w = if beta == 1.0 { 1.0 } else { beta.powf(tau as f64) };
            acc += w * self.flow.batch(tau)? as f64 * (g(tau)? - c_post);
        }
        Ok(acc)
    }

    pub fn value_discard(&self, t: u64, train_at: &[u64]) -> Result<f64> {
        Ok(-self.pre_cost_to(t, train_at)?)
    }

    /// Incremental value of switching over discarding at `t`.
    pub fn delta_v(&self, t: u64, gap_at_t: f64) -> Result<f64> {
        self.check_step(t)?;
        Ok(-self.discount.factor(t) * self.costs.c_s + self.post_net(t, gap_at_t))
    }

    /// Largest schedule epoch whose pre-decision and switching costs fit in
    /// `budget`, training charged at every visited epoch.
    pub fn budget_horizon(&self, budget: f64) -> Result<Option<u64>> {
        if !(budget >= 0.0) {
            return Err(Error::Config(format!("budget must be >= 0, got {budget}")));
        }
        let epochs = self.schedule.epochs();
        let mut feasible = None;
        for (i, &t) in epochs.iter().enumerate() {
            let spent =
                self.pre_cost_to(t, &epochs[..=i])? + self.discount.factor(t) * self.costs.c_s;
            if spent <= budget {
                feasible = Some(t);
            } else {
                break;
            }
        }
        Ok(feasible)
    }

    /// Per-sample pre-decision cost with per-step training folded in,
    /// `c_acq_pre + c_train / n`. Requires a constant flow and constant
    /// per-retrain training cost.
    pub fn folded_pre_cost(&self) -> Result<f64> {
        let n = self
            .flow
            .constant_n()
            .ok_or_else(|| Error::Config("folded pre-cost requires a constant flow".into()))?;
        let constant_train = self.costs.train_mode == TrainMode::PerRetrainConstant || self.costs.q == 0.0;
        if !constant_train {
            return Err(Error::Config(
                "folded pre-cost requires constant per-retrain training cost".into(),
            ));
        }
        Ok(self.costs.c_acq_pre + self.costs.c_train / n as f64)
    }

    /// Closed-form switching value under a constant flow, infinite horizon
    /// and training at every step:
    /// `-n c_pre β/(1-β) + β^{t+1}/(1-β) · n [G(t) - c_diff]`.
    pub fn setting2_closed_form(&self, curve: &PowerLawCurve, t: u64) -> Result<f64> {
        if self.horizon != Horizon::Infinite {
            return Err(Error::Config("closed form requires an infinite horizon".into()));
        }
        self.check_step(t)?;
        let n = self.flow.constant_n().expect("checked in new") as f64;
        let beta = self.beta();
        let c_pre = self.folded_pre_cost()?;
        let c_diff = self.costs.c_acq_post - c_pre + self.costs.c_s * (1.0 - beta) / (beta * n);
        let g = curve.gap(&self.flow, t)?;
        let lead = beta.powf((t + 1) as f64) / (1.0 - beta);
        Ok(-n * c_pre * beta / (1.0 - beta) + lead * n * (g - c_diff))
    }
}
