//! Gap-estimate sample paths: synthetic noisy paths drawn from a true curve,
//! and CSV replay of externally supplied paths.
//!
//! Randomness comes from ChaCha8 seeded by `NoiseSpec::seed`. Stream 0
//! draws the epoch estimates and stream 1 the post-switch gap matrix, so
//! adding or dropping the matrix never perturbs the estimates.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{EpochSchedule, Estimate, FutureGaps, FutureRow, GapCurve, GapPath, SampleFlow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    /// Gaussian clipped to `[-2, 2]`.
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma0: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma0: 1.0,
            seed: 0,
        }
    }
}

/// Synthetic environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub truth: GapCurve,
    pub flow: SampleFlow,
    pub schedule: EpochSchedule,
    /// Last step of the post-switch gap matrix.
    pub horizon: u64,
    pub rho: f64,
    pub noise: NoiseSpec,
    /// Additive per-step drift applied to every model's gap.
    pub drift: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.noise.sigma0 >= 0.0 && self.noise.sigma0.is_finite()) {
            return Err(Error::Config(format!("sigma0 must be >= 0, got {}", self.noise.sigma0)));
        }
        if !self.drift.is_finite() {
            return Err(Error::Config("drift must be finite".into()));
        }
        if self.schedule.last() > self.horizon {
            return Err(Error::Config(format!(
                "schedule epoch {} exceeds horizon {}",
                self.schedule.last(),
                self.horizon
            )));
        }
        if let Some(len) = self.flow.len() {
            if len < self.horizon {
                return Err(Error::Config(format!(
                    "sample flow covers {len} steps but the horizon is {}",
                    self.horizon
                )));
            }
        }
        if let Some(max) = self.truth.max_step() {
            if max < self.horizon {
                return Err(Error::Config(format!(
                    "tabulated curve covers {max} steps but the horizon is {}",
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut next = self.clone();
        next.noise.seed = seed;
        next
    }

    /// True expected gap at step `t`, including drift.
    pub fn true_gap(&self, t: u64) -> Result<f64> {
        Ok(self.truth.gap(&self.flow, t)? + self.drift * t as f64)
    }

    /// Expected gap at step `tau` of the challenger trained at step `t_k`.
    pub fn deployed_gap(&self, t_k: u64, tau: u64) -> Result<f64> {
        Ok(self.truth.gap(&self.flow, t_k)? + self.drift * tau as f64)
    }

    /// Standard deviation of the estimate at an epoch with `n_cum` samples.
    pub fn estimate_sd(&self, n_cum: u64) -> f64 {
        self.noise.sigma0 / (self.rho * n_cum as f64).sqrt()
    }

    fn noise(&self, rng: &mut ChaCha8Rng, sd: f64) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let e = sd * z;
        match self.noise.kind {
            NoiseKind::Gaussian => e,
            NoiseKind::Bounded => e.clamp(-2.0, 2.0),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise.seed);
        rng.set_stream(stream);
        rng
    }
}

// ---------------------------------------------------------------------------
// Synthetic paths
// ---------------------------------------------------------------------------

/// Noisy estimates at every epoch, without the post-switch matrix.
pub fn synth_estimates(spec: &EnvSpec) -> Result<Vec<Estimate>> {
    spec.validate()?;
    let mut rng = spec.rng(0);
    let mut out = Vec::with_capacity(spec.schedule.len());
    for (i, &t) in spec.schedule.epochs().iter().enumerate() {
        let n_cum = spec.flow.cumulative(t)?;
        let g = spec.true_gap(t)?;
        let gap = g + spec.noise(&mut rng, spec.estimate_sd(n_cum));
        out.push(Estimate {
            epoch_index: i + 1,
            time_step: t,
            cumulative: n_cum,
            gap,
        });
    }
    Ok(out)
}

/// Full synthetic path: estimates plus noisy realised post-switch gaps for
/// every challenger over `t_k + 1 ..= horizon`.
pub fn synth_path(spec: &EnvSpec) -> Result<GapPath> {
    let estimates = synth_estimates(spec)?;
    let mut rng = spec.rng(1);
    let mut rows = Vec::with_capacity(estimates.len());
    for e in &estimates {
        let base = spec.truth.gap(&spec.flow, e.time_step)?;
        let mut gaps = Vec::with_capacity((spec.horizon - e.time_step) as usize);
        for tau in (e.time_step + 1)..=spec.horizon {
            let sd = spec.noise.sigma0 / (spec.flow.batch(tau)? as f64).sqrt();
            gaps.push(base + spec.drift * tau as f64 + spec.noise(&mut rng, sd));
        }
        rows.push(FutureRow {
            first_step: e.time_step + 1,
            gaps,
        });
    }
    Ok(GapPath {
        estimates,
        future_gaps: Some(FutureGaps { rows }),
    })
}

/// Noise-free post-switch gap matrix for the given epochs.
pub fn expected_future_gaps(spec: &EnvSpec, estimates: &[Estimate]) -> Result<FutureGaps> {
    let mut rows = Vec::with_capacity(estimates.len());
    for e in estimates {
        let gaps = ((e.time_step + 1)..=spec.horizon)
            .map(|tau| spec.deployed_gap(e.time_step, tau))
            .collect::<Result<Vec<_>>>()?;
        rows.push(FutureRow {
            first_step: e.time_step + 1,
            gaps,
        });
    }
    Ok(FutureGaps { rows })
}

// ---------------------------------------------------------------------------
// CSV replay
// ---------------------------------------------------------------------------

pub const ESTIMATE_HEADER: [&str; 4] = ["epoch_index", "k_time_step", "cumulative_samples", "gap_estimate"];
pub const FUTURE_HEADER: [&str; 3] = ["challenger_epoch_index", "time_step", "gap"];

#[derive(Debug, Deserialize)]
struct EstimateRecord {
    epoch_index: usize,
    k_time_step: u64,
    cumulative_samples: u64,
    gap_estimate: f64,
}

#[derive(Debug, Deserialize)]
struct FutureRecord {
    challenger_epoch_index: usize,
    time_step: u64,
    gap: f64,
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Load the estimates of a path from CSV and validate them.
pub fn replay_from_csv<R: Read>(r: R) -> Result<GapPath> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Validation("file is empty".into()));
    }
    check_header(&headers, &ESTIMATE_HEADER)?;
    let mut estimates = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let row: EstimateRecord = rec.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        estimates.push(Estimate {
            epoch_index: row.epoch_index,
            time_step: row.k_time_step,
            cumulative: row.cumulative_samples,
            gap: row.gap_estimate,
        });
    }
    let path = GapPath {
        estimates,
        future_gaps: None,
    };
    path.validate()?;
    Ok(path)
}

/// Attach a post-switch gap matrix read from CSV to `path`.
pub fn attach_future_from_csv<R: Read>(path: &mut GapPath, r: R) -> Result<()> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    check_header(&headers, &FUTURE_HEADER)?;
    let mut by_epoch: BTreeMap<usize, Vec<(u64, f64, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let row: FutureRecord = rec.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        by_epoch
            .entry(row.challenger_epoch_index)
            .or_default()
            .push((row.time_step, row.gap, line));
    }
    let mut rows = Vec::with_capacity(path.estimates.len());
    for e in &path.estimates {
        let entries = by_epoch.remove(&e.epoch_index).ok_or_else(|| {
            Error::Validation(format!("no future gaps for challenger {}", e.epoch_index))
        })?;
        let first_step = e.time_step + 1;
        let mut gaps = Vec::with_capacity(entries.len());
        for (i, &(tau, gap, line)) in entries.iter().enumerate() {
            if tau != first_step + i as u64 {
                return Err(Error::Validation(format!(
                    "line {line}: challenger {} expected time step {}, got {tau}",
                    e.epoch_index,
                    first_step + i as u64
                )));
            }
            gaps.push(gap);
        }
        rows.push(FutureRow { first_step, gaps });
    }
    if let Some((&k, _)) = by_epoch.iter().next() {
        return Err(Error::Validation(format!("future gaps reference unknown challenger {k}")));
    }
    path.future_gaps = Some(FutureGaps { rows });
    path.validate()
}

pub fn write_estimates_csv<W: Write>(w: W, path: &GapPath) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ESTIMATE_HEADER)?;
    for e in &path.estimates {
        wtr.write_record([
            e.epoch_index.to_string(),
            e.time_step.to_string(),
            e.cumulative.to_string(),
            e.gap.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_future_csv<W: Write>(w: W, path: &GapPath) -> Result<()> {
    let fg = path
        .future_gaps
        .as_ref()
        .ok_or_else(|| Error::Config("path has no future gaps to write".into()))?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(FUTURE_HEADER)?;
    for (row, e) in fg.rows.iter().zip(&path.estimates) {
        for (i, g) in row.gaps.iter().enumerate() {
            wtr.write_record([
                e.epoch_index.to_string(),
                (row.first_step + i as u64).to_string(),
                g.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
