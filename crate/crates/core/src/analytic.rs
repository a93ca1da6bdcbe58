//! Closed-form and semi-closed-form optimal stopping under power-law gaps.
//!
//! Two regimes are covered. The finite-horizon undiscounted regime has
//! symmetric per-sample costs, so the value is
//! `-T n c - c_s + (T - t) n G(t)`. The discounted infinite-horizon regime
//! has constant `n` and training at every step, and its value is
//! `β^{t+1}/(1-β) n [G(t) - c_diff]` plus a constant.

use crate::error::{Error, Result};
use crate::model::{CostModel, PowerLawCurve, TrainMode};

/// Outcome of the discounted threshold analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSummary {
    pub c_diff: f64,
    pub k: f64,
    pub t0: Option<f64>,
    pub t_star_continuous: Option<f64>,
    pub t_star_integer: Option<u64>,
    /// Switching value at the integer optimum, valued at step 0.
    pub value_at_t_star: Option<f64>,
    /// `ΔV` at the integer optimum (switch vs discard at that epoch).
    pub delta_v_at_t_star: Option<f64>,
    /// Switching at the optimum beats discarding before any data arrives.
    pub switch_is_optimal: bool,
}

/// Finite-horizon optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting1Result {
    pub t_star_asymptotic: f64,
    pub t_star_continuous: f64,
    pub t_star_integer: u64,
    pub value_at_t_star: f64,
    pub switch: bool,
}

// ---------------------------------------------------------------------------
// Shared quantities
// ---------------------------------------------------------------------------

/// Per-sample pre-decision cost with constant per-retrain training folded in.
fn folded_pre(costs: &CostModel, n: f64) -> Result<f64> {
    let constant_train = costs.train_mode == TrainMode::PerRetrainConstant || costs.q == 0.0;
    if !constant_train {
        return Err(Error::Config(
            "closed-form analysis needs constant per-retrain training cost (q = 0)".into(),
        ));
    }
    Ok(costs.c_acq_pre + costs.c_train / n)
}

/// Effective per-sample switching hurdle `c_post - c_pre + c_s (1-β)/(β n)`.
pub fn c_diff(costs: &CostModel, beta: f64, n: u64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let n = n as f64;
    let c_pre = folded_pre(costs, n)?;
    let base = costs.c_acq_post - c_pre;
    if beta == 1.0 {
        return Ok(base);
    }
    Ok(base + costs.c_s * (1.0 - beta) / (beta * n))
}

/// `K = n^α (g* - c_diff) / g0`.
pub fn compute_k(curve: &PowerLawCurve, n: u64, c_diff: f64) -> f64 {
    (n as f64).powf(curve.alpha) * (curve.g_star - c_diff) / curve.g0
}

/// `t0 = ((α+1) K)^{-1/α}`.
pub fn compute_t0(k: f64, alpha: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::Feasibility(format!("t0 undefined for K = {k} <= 0")));
    }
    Ok(((alpha + 1.0) * k).powf(-1.0 / alpha))
}

/// `f(t) = K t^{α+1} - t + α / ln β`.
pub fn foc(k: f64, alpha: f64, beta: f64, t: f64) -> f64 {
    k * t.powf(alpha + 1.0) - t + alpha / beta.ln()
}

/// Unique root of the first-order condition on `(t0, ∞)`.
pub fn foc_root(k: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("first-order condition needs 0 < beta < 1, got {beta}")));
    }
    let t0 = compute_t0(k, alpha)?;
    let f = |t: f64| foc(k, alpha, beta, t);
    let mut lo = t0;
    let mut hi = 2.0 * t0.max(0.5);
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Domain("first-order condition root not bracketed".into()));
        }
    }
    for _ in 0..400 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Finite horizon, no discounting
// ---------------------------------------------------------------------------

/// Asymptotic optimum `[(g0/n^α) α T / g*]^{1/(1+α)}`.
pub fn setting1_asymptotic(curve: &PowerLawCurve, n: u64, horizon: u64) -> Result<f64> {
    if !(curve.g_star > 0.0) {
        return Err(Error::Feasibility("asymptotic optimum needs g* > 0".into()));
    }
    let a = curve.alpha;
    let scale = curve.g0 / (n as f64).powf(a);
    Ok((scale * a * horizon as f64 / curve.g_star).powf(1.0 / (1.0 + a)))
}

/// Finite-horizon switching value `-T n c - c_s + (T - t) n G(t)` at real `t`.
pub fn setting1_value(curve: &PowerLawCurve, n: u64, horizon: u64, c: f64, c_s: f64, t: f64) -> f64 {
    let nf = n as f64;
    let tf = horizon as f64;
    -tf * nf * c - c_s + (tf - t) * nf * curve.at_samples(nf * t)
}

/// Exact continuous maximiser of `(T - t) G(t)` on `[1, T - 1]`.
///
/// The product is strictly concave, so its derivative
/// `-G(t) + (T - t) G'(t)` has at most one sign change.
pub fn setting1_continuous(curve: &PowerLawCurve, n: u64, horizon: u64) -> f64 {
    let nf = n as f64;
    let tf = horizon as f64;
    let a = curve.alpha;
    let deriv = |t: f64| {
        let g = curve.at_samples(nf * t);
        let dg = curve.g0 * a * nf.powf(-a) * t.powf(-a - 1.0);
        -g + (tf - t) * dg
    };
    let (mut lo, mut hi) = (1.0, tf - 1.0);
    if deriv(lo) <= 0.0 {
        return lo;
    }
    if deriv(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..400 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Finite-horizon optimum with per-sample cost `c` (pre = post) and switching
/// cost `c_s`.
pub fn setting1_tstar(curve: &PowerLawCurve, n: u64, horizon: u64, c: f64, c_s: f64) -> Result<Setting1Result> {
    if horizon < 2 {
        return Err(Error::Config(format!("horizon must be >= 2, got {horizon}")));
    }
    let asym = setting1_asymptotic(curve, n, horizon)?;
    let cont = setting1_continuous(curve, n, horizon);
    let hi = horizon - 1;
    let clip = |x: f64| -> u64 { (x.max(1.0) as u64).clamp(1, hi) };
    let mut candidates = Vec::new();
    for anchor in [cont, asym] {
        let base = clip(anchor.floor());
        for d in -2i64..=3 {
            let t = base as i64 + d;
            if t >= 1 && t as u64 <= hi {
                candidates.push(t as u64);
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    let value = |t: u64| setting1_value(curve, n, horizon, c, c_s, t as f64);
    let mut best = candidates[0];
    for &t in &candidates[1..] {
        if value(t) > value(best) {
            best = t;
        }
    }
    let v = value(best);
    Ok(Setting1Result {
        t_star_asymptotic: asym,
        t_star_continuous: cont,
        t_star_integer: best,
        value_at_t_star: v,
        switch: v >= 0.0,
    })
}

// ---------------------------------------------------------------------------
// Discounted infinite horizon
// ---------------------------------------------------------------------------

/// Asymptotic optimum `[(g0/n^α) α / (g* - c_diff) / (1-β)]^{1/(1+α)}`.
pub fn setting2_tstar_asymptotic(curve: &PowerLawCurve, n: u64, beta: f64, c_diff: f64) -> Result<f64> {
    if !(curve.g_star > c_diff) {
        return Err(Error::Feasibility(format!(
            "g* = {} does not exceed c_diff = {c_diff}",
            curve.g_star
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("asymptotic optimum needs 0 < beta < 1, got {beta}")));
    }
    let a = curve.alpha;
    let scale = curve.g0 / (n as f64).powf(a);
    Ok((scale * a / (curve.g_star - c_diff) / (1.0 - beta)).powf(1.0 / (1.0 + a)))
}

/// Closed-form switching value at step `t` with folded pre-cost `c_pre`.
pub fn setting2_value(curve: &PowerLawCurve, n: u64, beta: f64, c_pre: f64, c_diff: f64, t: u64) -> f64 {
    let nf = n as f64;
    let g = curve.at_samples(nf * t as f64);
    -nf * c_pre * beta / (1.0 - beta) + beta.powf((t + 1) as f64) / (1.0 - beta) * nf * (g - c_diff)
}

/// `G(t) - β G(t+1) - (1-β) c_diff`; nonnegative exactly when `V(t) >= V(t+1)`.
pub fn threshold(curve: &PowerLawCurve, n: u64, beta: f64, c_diff: f64, t: u64) -> f64 {
    let nf = n as f64;
    let g = curve.at_samples(nf * t as f64);
    let g_next = curve.at_samples(nf * (t + 1) as f64);
    g - beta * g_next - (1.0 - beta) * c_diff
}

/// Smallest `t >= 1` with a nonnegative threshold, starting the upward scan
/// at `max(1, ⌊t0⌋)`. The threshold is increasing in `t`, so the scan gallops
/// and then bisects.
fn threshold_scan(curve: &PowerLawCurve, n: u64, beta: f64, c_diff: f64, t0: f64) -> u64 {
    let h = |t: u64| threshold(curve, n, beta, c_diff, t);
    let mut start = (t0.floor() as u64).max(1);
    while start > 1 && h(start - 1) >= 0.0 {
        start -= 1;
    }
    if h(start) >= 0.0 {
        return start;
    }
    // h(lo) < 0 <= h(hi)
    let mut lo = start;
    let mut step = 1u64;
    let mut hi = start + step;
    while h(hi) < 0.0 {
        lo = hi;
        step = step.saturating_mul(2);
        hi = hi.saturating_add(step);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if h(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Optimal switching epoch under constant `n`, discounting `β < 1`, an
/// infinite horizon and training at every step.
pub fn theorem1_stop(curve: &PowerLawCurve, n: u64, beta: f64, costs: &CostModel) -> Result<AnalyticSummary> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("discounted analysis needs 0 < beta < 1, got {beta}")));
    }
    let cd = c_diff(costs, beta, n)?;
    let k = compute_k(curve, n, cd);
    if !(k > 0.0) {
        return Ok(AnalyticSummary {
            c_diff: cd,
            k,
            t0: None,
            t_star_continuous: None,
            t_star_integer: None,
            value_at_t_star: None,
            delta_v_at_t_star: None,
            switch_is_optimal: false,
        });
    }
    let t0 = compute_t0(k, curve.alpha)?;
    let root = foc_root(k, curve.alpha, beta)?;
    let t_int = threshold_scan(curve, n, beta, cd, t0);
    let c_pre = folded_pre(costs, n as f64)?;
    let value = setting2_value(curve, n, beta, c_pre, cd, t_int);
    let nf = n as f64;
    let g = curve.at_samples(nf * t_int as f64);
    let dv = -beta.powf(t_int as f64) * costs.c_s
        + beta.powf((t_int + 1) as f64) / (1.0 - beta) * nf * (g - costs.c_acq_post);
    Ok(AnalyticSummary {
        c_diff: cd,
        k,
        t0: Some(t0),
        t_star_continuous: Some(root),
        t_star_integer: Some(t_int),
        value_at_t_star: Some(value),
        delta_v_at_t_star: Some(dv),
        switch_is_optimal: value >= 0.0,
    })
}
