//! Domain types shared by every module: sample flow, horizon, discounting,
//! costs, the gap curve, epoch schedules, observed gap paths and decisions.
//!
//! Time steps are 1-indexed. Step 0 is only the valuation point; no samples
//! arrive there.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Sample flow
// ---------------------------------------------------------------------------

/// Per-step arrival of full-feature samples.
///
/// Either a constant batch `n` per step (unbounded in time) or an explicit
/// list of batch sizes `n_1, n_2, ...` covering a finite number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFlow {
    constant_n: Option<u64>,
    batches: Vec<u64>,
    cumulative: Vec<u64>,
}

impl SampleFlow {
    pub fn constant(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("batch size n must be >= 1".into()));
        }
        Ok(Self {
            constant_n: Some(n),
            batches: Vec::new(),
            cumulative: Vec::new(),
        })
    }

    pub fn from_batches(batches: Vec<u64>) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::Config("batch list is empty".into()));
        }
        if let Some(pos) = batches.iter().position(|&b| b == 0) {
            return Err(Error::Config(format!(
                "batch size at step {} is 0; every n_t must be >= 1",
                pos + 1
            )));
        }
        let mut cumulative = Vec::with_capacity(batches.len());
        let mut acc = 0u64;
        for &b in &batches {
            acc = acc
                .checked_add(b)
                .ok_or_else(|| Error::Config("cumulative sample count overflows u64".into()))?;
            cumulative.push(acc);
        }
        // A flow whose batches are all equal is still reported as explicit;
        // callers that need the closed forms ask for `constant_n`.
        Ok(Self {
            constant_n: None,
            batches,
            cumulative,
        })
    }

    /// Constant batch size, when the flow was built with one.
    pub fn constant_n(&self) -> Option<u64> {
        self.constant_n
    }

    /// Number of steps covered, `None` for an unbounded constant flow.
    pub fn len(&self) -> Option<u64> {
        match self.constant_n {
            Some(_) => None,
            None => Some(self.batches.len() as u64),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self, t: u64) -> Result<()> {
        if t == 0 {
            return Err(Error::Bounds {
                t,
                max: self.len().unwrap_or(u64::MAX),
            });
        }
        if let Some(len) = self.len() {
            if t > len {
                return Err(Error::Bounds { t, max: len });
            }
        }
        Ok(())
    }

    /// Batch size `n_t`.
    pub fn batch(&self, t: u64) -> Result<u64> {
        self.check(t)?;
        Ok(match self.constant_n {
            Some(n) => n,
            None => self.batches[(t - 1) as usize],
        })
    }

    /// Cumulative count `N_t = n_1 + ... + n_t`.
    pub fn cumulative(&self, t: u64) -> Result<u64> {
        self.check(t)?;
        match self.constant_n {
            Some(n) => n
                .checked_mul(t)
                .ok_or_else(|| Error::Domain("cumulative sample count overflows u64".into())),
            None => Ok(self.cumulative[(t - 1) as usize]),
        }
    }

    pub fn batches(&self) -> &[u64] {
        &self.batches
    }
}

/// `N_t` for the given flow.
pub fn cumulative_samples(flow: &SampleFlow, t: u64) -> Result<u64> {
    flow.cumulative(t)
}

// ---------------------------------------------------------------------------
// Horizon and discounting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

impl Horizon {
    pub fn finite(t: u64) -> Result<Self> {
        if t < 2 {
            return Err(Error::Config(format!("finite horizon must be >= 2, got {t}")));
        }
        Ok(Horizon::Finite(t))
    }

    pub fn steps(&self) -> Option<u64> {
        match self {
            Horizon::Finite(t) => Some(*t),
            Horizon::Infinite => None,
        }
    }
}

/// Per-step discount factor `β ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountSpec {
    beta: f64,
}

impl DiscountSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("discount beta must lie in (0, 1], got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `β^t`.
    pub fn factor(&self, t: u64) -> f64 {
        if self.beta == 1.0 {
            1.0
        } else {
            self.beta.powf(t as f64)
        }
    }
}

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// `C_train = c_train` at each retraining epoch.
    PerRetrainConstant,
    /// `C_train(t) = c_train * N_t^q`.
    PolynomialInN,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub c_acq_pre: f64,
    pub c_acq_post: f64,
    pub c_train: f64,
    pub q: f64,
    pub train_mode: TrainMode,
    pub c_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            c_acq_pre: 0.0,
            c_acq_post: 0.0,
            c_train: 0.0,
            q: 0.0,
            train_mode: TrainMode::PerRetrainConstant,
            c_s: 0.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_acq_pre", self.c_acq_pre),
            ("c_acq_post", self.c_acq_post),
            ("c_train", self.c_train),
            ("q", self.q),
            ("c_s", self.c_s),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("cost field {name} must be finite and >= 0, got {v}")));
            }
        }
        if self.train_mode == TrainMode::PerRetrainConstant && self.q != 0.0 {
            return Err(Error::Config(
                "train_mode per_retrain_constant requires q = 0".into(),
            ));
        }
        Ok(())
    }

    /// Training cost of one retrain on `n_cum` samples.
    pub fn training_cost(&self, n_cum: u64) -> f64 {
        match self.train_mode {
            TrainMode::PerRetrainConstant => self.c_train,
            TrainMode::PolynomialInN => {
                if self.q == 0.0 {
                    self.c_train
                } else {
                    self.c_train * (n_cum as f64).powf(self.q)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gap curves
// ---------------------------------------------------------------------------

/// Power-law learning curve `G(N) = g* - g0 * N^(-α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawCurve {
    pub g_star: f64,
    pub g0: f64,
    pub alpha: f64,
}

impl PowerLawCurve {
    pub fn new(g_star: f64, g0: f64, alpha: f64) -> Result<Self> {
        if !(g_star >= 0.0 && g_star.is_finite()) {
            return Err(Error::Config(format!("g_star must be finite and >= 0, got {g_star}")));
        }
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(Error::Config(format!("g0 must be > 0, got {g0}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { g_star, g0, alpha })
    }

    /// Gap at a real-valued sample count.
    pub fn at_samples(&self, n_cum: f64) -> f64 {
        self.g_star - self.g0 * n_cum.powf(-self.alpha)
    }

    /// `G(t)` for the cumulative count reached by step `t`.
    pub fn gap(&self, flow: &SampleFlow, t: u64) -> Result<f64> {
        let n_cum = flow.cumulative(t)?;
        if n_cum == 0 {
            return Err(Error::Domain("gap undefined for N_t = 0".into()));
        }
        Ok(self.at_samples(n_cum as f64))
    }
}

/// `G(t)` for a power-law curve.
pub fn gap(curve: &PowerLawCurve, flow: &SampleFlow, t: u64) -> Result<f64> {
    curve.gap(flow, t)
}

/// Per-step tabulated gap values `G(1), G(2), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCurve {
    values: Vec<f64>,
}

impl TabulatedCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("tabulated curve is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("tabulated gap at step {} is not finite", i + 1)));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gap(&self, t: u64) -> Result<f64> {
        if t == 0 || t > self.len() {
            return Err(Error::Bounds { t, max: self.len() });
        }
        Ok(self.values[(t - 1) as usize])
    }
}

/// The true expected gap process.
#[derive(Debug, Clone, PartialEq)]
pub enum GapCurve {
    PowerLaw(PowerLawCurve),
    Tabulated(TabulatedCurve),
}

impl GapCurve {
    pub fn gap(&self, flow: &SampleFlow, t: u64) -> Result<f64> {
        match self {
            GapCurve::PowerLaw(c) => c.gap(flow, t),
            GapCurve::Tabulated(c) => c.gap(t),
        }
    }

    /// Largest step the curve is defined for.
    pub fn max_step(&self) -> Option<u64> {
        match self {
            GapCurve::PowerLaw(_) => None,
            GapCurve::Tabulated(c) => Some(c.len()),
        }
    }
}

impl From<PowerLawCurve> for GapCurve {
    fn from(c: PowerLawCurve) -> Self {
        GapCurve::PowerLaw(c)
    }
}

// ---------------------------------------------------------------------------
// Epoch schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Uniform { step: u64 },
    Geometric { first: u64, ratio: f64 },
    Explicit,
}

/// Strictly increasing decision epochs `t_1 < t_2 < ... <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSchedule {
    epochs: Vec<u64>,
    kind: ScheduleKind,
}

impl EpochSchedule {
    pub(crate) fn from_parts(epochs: Vec<u64>, kind: ScheduleKind) -> Self {
        Self { epochs, kind }
    }

    pub fn explicit(epochs: Vec<u64>, horizon: Option<u64>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::Config("explicit schedule has no epochs".into()));
        }
        if epochs[0] == 0 {
            return Err(Error::Config("epochs are 1-indexed; found epoch 0".into()));
        }
        if let Some(w) = epochs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "epochs must be strictly increasing; found {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(t) = horizon {
            if let Some(&last) = epochs.last() {
                if last > t {
                    return Err(Error::Config(format!("epoch {last} exceeds horizon {t}")));
                }
            }
        }
        Ok(Self {
            epochs,
            kind: ScheduleKind::Explicit,
        })
    }

    pub fn epochs(&self) -> &[u64] {
        &self.epochs
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Time step of 1-based epoch `k`.
    pub fn time(&self, k: usize) -> Option<u64> {
        if k == 0 {
            return None;
        }
        self.epochs.get(k - 1).copied()
    }

    pub fn last(&self) -> u64 {
        *self.epochs.last().expect("schedule is never empty")
    }

    /// Epoch times `<= t`.
    pub fn up_to(&self, t: u64) -> &[u64] {
        let end = self.epochs.partition_point(|&e| e <= t);
        &self.epochs[..end]
    }
}

// ---------------------------------------------------------------------------
// Policy configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    /// Validation split ratio ρ.
    pub rho: f64,
    /// Confidence parameter γ.
    pub gamma: f64,
    /// Smoothing window for LSE.
    pub window: usize,
    /// 1-based evaluation epoch for OSE.
    pub ose_epoch_index: Option<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            gamma: 0.0,
            window: 2,
            ose_epoch_index: None,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self, schedule_len: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window must be >= 2, got {}", self.window)));
        }
        if let Some(k) = self.ose_epoch_index {
            if k == 0 || k > schedule_len {
                return Err(Error::Config(format!(
                    "ose epoch index {k} outside 1..={schedule_len}"
                )));
            }
        }
        Ok(())
    }

    /// Confidence width `δ = γ / sqrt(ρ N)`.
    pub fn delta(&self, n_cum: u64) -> f64 {
        self.gamma / (self.rho * n_cum as f64).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Observed paths
// ---------------------------------------------------------------------------

/// Gap estimate observed at one decision epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// 1-based epoch index k.
    pub epoch_index: usize,
    pub time_step: u64,
    pub cumulative: u64,
    pub gap: f64,
}

/// Realised per-step gaps of the challenger trained at one epoch, for the
/// steps after that epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FutureRow {
    /// First step covered, `t_k + 1`.
    pub first_step: u64,
    pub gaps: Vec<f64>,
}

impl FutureRow {
    pub fn gap(&self, tau: u64) -> Option<f64> {
        if tau < self.first_step {
            return None;
        }
        self.gaps.get((tau - self.first_step) as usize).copied()
    }

    /// Last step covered (or `first_step - 1` when empty).
    pub fn last_step(&self) -> u64 {
        self.first_step + self.gaps.len() as u64 - 1
    }
}

/// Matrix `Ĝ_{τ,k}` with one row per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FutureGaps {
    pub rows: Vec<FutureRow>,
}

impl FutureGaps {
    pub fn row(&self, epoch_index: usize) -> Option<&FutureRow> {
        epoch_index.checked_sub(1).and_then(|i| self.rows.get(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapPath {
    pub estimates: Vec<Estimate>,
    pub future_gaps: Option<FutureGaps>,
}

impl GapPath {
    /// Checks ordering and alignment invariants.
    pub fn validate(&self) -> Result<()> {
        if self.estimates.is_empty() {
            return Err(Error::Validation("path has no estimates".into()));
        }
        for (i, e) in self.estimates.iter().enumerate() {
            if e.epoch_index != i + 1 {
                return Err(Error::Validation(format!(
                    "estimate {} has epoch index {}; indices must run 1, 2, ... without gaps or duplicates",
                    i + 1,
                    e.epoch_index
                )));
            }
            if !e.gap.is_finite() {
                return Err(Error::Validation(format!("gap estimate at epoch {} is not finite", e.epoch_index)));
            }
        }
        for w in self.estimates.windows(2) {
            if w[1].time_step <= w[0].time_step {
                return Err(Error::Validation(format!(
                    "time steps not increasing at epoch {}",
                    w[1].epoch_index
                )));
            }
            if w[1].cumulative <= w[0].cumulative {
                return Err(Error::Validation(format!(
                    "cumulative samples not increasing at epoch {}",
                    w[1].epoch_index
                )));
            }
        }
        if self.estimates[0].cumulative == 0 || self.estimates[0].time_step == 0 {
            return Err(Error::Validation("first epoch must have t >= 1 and N >= 1".into()));
        }
        if let Some(fg) = &self.future_gaps {
            if fg.rows.len() != self.estimates.len() {
                return Err(Error::Validation(format!(
                    "future gaps have {} rows for {} epochs",
                    fg.rows.len(),
                    self.estimates.len()
                )));
            }
            let end = fg.rows[0].last_step();
            for (row, e) in fg.rows.iter().zip(&self.estimates) {
                if row.first_step != e.time_step + 1 {
                    return Err(Error::Validation(format!(
                        "future gaps for challenger {} start at step {}, expected {}",
                        e.epoch_index,
                        row.first_step,
                        e.time_step + 1
                    )));
                }
                if row.last_step() != end {
                    return Err(Error::Validation(format!(
                        "future gaps for challenger {} end at step {}, expected {}",
                        e.epoch_index,
                        row.last_step(),
                        end
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn epoch_times(&self) -> Vec<u64> {
        self.estimates.iter().map(|e| e.time_step).collect()
    }
}

// ---------------------------------------------------------------------------
// Decisions and values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Switch {
        epoch_index: usize,
        challenger_epoch_index: usize,
    },
    /// `epoch_index == 0` means discarding before any data is collected.
    Discard { epoch_index: usize },
}

impl Decision {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Decision::Continue)
    }

    pub fn epoch_index(&self) -> Option<usize> {
        match self {
            Decision::Continue => None,
            Decision::Switch { epoch_index, .. } | Decision::Discard { epoch_index } => Some(*epoch_index),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Decision::Continue => "continue",
            Decision::Switch { .. } => "switch",
            Decision::Discard { .. } => "discard",
        }
    }
}

/// Present value of switching split into its three timing components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueBreakdown {
    pre_cost: f64,
    switch_cost: f64,
    post_net: f64,
    total: f64,
}

impl ValueBreakdown {
    pub fn new(pre_cost: f64, switch_cost: f64, post_net: f64) -> Self {
        Self {
            pre_cost,
            switch_cost,
            post_net,
            total: -pre_cost - switch_cost + post_net,
        }
    }

    pub fn pre_cost(&self) -> f64 {
        self.pre_cost
    }

    pub fn switch_cost(&self) -> f64 {
        self.switch_cost
    }

    pub fn post_net(&self) -> f64 {
        self.post_net
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_constant_and_batches() {
        let one = SampleFlow::constant(1).unwrap();
        assert_eq!(cumulative_samples(&one, 5).unwrap(), 5);
        let three = SampleFlow::constant(3).unwrap();
        assert_eq!(cumulative_samples(&three, 4).unwrap(), 12);
        let batches = SampleFlow::from_batches(vec![500, 1000, 2000]).unwrap();
        assert_eq!(cumulative_samples(&batches, 3).unwrap(), 3500);
    }

    #[test]
    fn cumulative_out_of_range() {
        let batches = SampleFlow::from_batches(vec![1, 2]).unwrap();
        assert_eq!(batches.cumulative(3), Err(Error::Bounds { t: 3, max: 2 }));
        assert!(matches!(batches.cumulative(0), Err(Error::Bounds { .. })));
        assert!(SampleFlow::from_batches(vec![1, 0]).is_err());
        assert!(SampleFlow::constant(0).is_err());
    }

    #[test]
    fn power_law_gap_examples() {
        let one = SampleFlow::constant(1).unwrap();
        let c = PowerLawCurve::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(gap(&c, &one, 1).unwrap(), 0.0);
        assert_eq!(gap(&c, &one, 4).unwrap(), 0.75);
        let four = SampleFlow::constant(4).unwrap();
        let c = PowerLawCurve::new(0.5, 2.0, 0.5).unwrap();
        assert_eq!(gap(&c, &four, 4).unwrap(), 0.0);
    }

    #[test]
    fn gap_increasing_and_concave() {
        let flow = SampleFlow::constant(1).unwrap();
        let c = PowerLawCurve::new(0.3, 1.7, 0.6).unwrap();
        let g: Vec<f64> = (1..=10_000).map(|t| c.gap(&flow, t).unwrap()).collect();
        let d: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|&x| x > 0.0));
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn curve_and_horizon_validation() {
        assert!(PowerLawCurve::new(0.0, 1.0, 1.0).is_ok());
        assert!(PowerLawCurve::new(1.0, 0.0, 1.0).is_err());
        assert!(PowerLawCurve::new(1.0, 1.0, 0.0).is_err());
        assert!(Horizon::finite(1).is_err());
        assert!(DiscountSpec::new(0.0).is_err());
        assert!(DiscountSpec::new(1.0).is_ok());
        assert!(DiscountSpec::new(1.01).is_err());
    }

    #[test]
    fn breakdown_identity() {
        let b = ValueBreakdown::new(0.3, 0.1, 2.0);
        assert_eq!(b.total(), -0.3 - 0.1 + 2.0);
    }

    #[test]
    fn path_validation_rejects_duplicates() {
        let e = |k, t, n| Estimate {
            epoch_index: k,
            time_step: t,
            cumulative: n,
            gap: 0.1,
        };
        let ok = GapPath {
            estimates: vec![e(1, 1, 10), e(2, 2, 20)],
            future_gaps: None,
        };
        assert!(ok.validate().is_ok());
        let dup = GapPath {
            estimates: vec![e(1, 1, 10), e(1, 2, 20)],
            future_gaps: None,
        };
        assert!(matches!(dup.validate(), Err(Error::Validation(_))));
        let non_mono = GapPath {
            estimates: vec![e(1, 1, 10), e(2, 2, 10)],
            future_gaps: None,
        };
        assert!(matches!(non_mono.validate(), Err(Error::Validation(_))));
    }

    proptest::proptest! {
        #[test]
        fn cumulative_strictly_increasing(batches in proptest::collection::vec(1u64..1000, 1..50)) {
            let flow = SampleFlow::from_batches(batches.clone()).unwrap();
            for t in 1..batches.len() as u64 {
                proptest::prop_assert!(flow.cumulative(t + 1).unwrap() > flow.cumulative(t).unwrap());
            }
        }
    }
}
