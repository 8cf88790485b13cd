use serde::{Deserialize, Serialize};

use super::gpd::{fit_gpd, GpdFit, MIN_PEAKS};
use super::{Result, ThresholdError};
use crate::dataset_io::LabelSeries;
use crate::scalar::Scalar;

/// Below this `|gamma|` the tail quantile uses the exponential limit.
pub const EXPONENTIAL_GAMMA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Spot,
    FixedQuantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub delta: f64,
    pub q: f64,
    pub init_level: f64,
    pub method: ThresholdMethod,
    /// Initial threshold, the `init_level` quantile of the scores.
    pub t0: f64,
    pub gpd: Option<GpdFit<f64>>,
    pub n: usize,
    pub peak_count: usize,
    /// No score exceeded `t0`; `delta = t0`.
    pub no_peaks: bool,
}

/// Threshold report as written next to the predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub delta: f64,
    pub q: f64,
    pub init_level: f64,
    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
    pub n: usize,
    pub peak_count: usize,
    pub t0: f64,
    pub method: ThresholdMethod,
    pub no_peaks: bool,
}

impl ThresholdDecision {
    pub fn report(&self) -> ThresholdReport {
        ThresholdReport {
            delta: self.delta,
            q: self.q,
            init_level: self.init_level,
            gamma: self.gpd.map(|g| g.gamma),
            sigma: self.gpd.map(|g| g.sigma),
            n: self.n,
            peak_count: self.peak_count,
            t0: self.t0,
            method: self.method,
            no_peaks: self.no_peaks,
        }
    }
}

fn widen_checked<T: Scalar>(scores: &[T]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(ThresholdError::EmptyScores);
    }
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = s.widen();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ThresholdError::NonFiniteScore(i))
            }
        })
        .collect()
}

fn check_level(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ThresholdError::InvalidParams(format!("{name} = {value} outside (0, 1)")))
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `level * (n - 1)` in the sorted sample).
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// GPD tail quantile: the level exceeded with probability `q` when `n_t` of
/// `n` scores exceed `t0`.
pub fn tail_quantile(t0: f64, gamma: f64, sigma: f64, q: f64, n: usize, n_t: usize) -> f64 {
    let r = q * n as f64 / n_t as f64;
    if gamma.abs() > EXPONENTIAL_GAMMA_TOL {
        t0 + sigma / gamma * (r.powf(-gamma) - 1.0)
    } else {
        t0 - sigma * r.ln()
    }
}

/// SPOT threshold fitted once over the whole series.
///
/// With fewer than the minimum number of peaks for a GPD fit the tail is
/// taken as exponential with scale equal to the mean excess. The result is
/// clamped to `[t0, max score + sigma]`.
pub fn spot_threshold<T: Scalar>(scores: &[T], q: f64, init_level: f64) -> Result<ThresholdDecision> {
    check_level("q", q)?;
    check_level("init_level", init_level)?;
    let mut sorted = widen_checked(scores)?;
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let t0 = empirical_quantile(&sorted, init_level);
    let peaks: Vec<f64> = sorted.iter().filter(|&&s| s > t0).map(|&s| s - t0).collect();
    let mut decision = ThresholdDecision {
        delta: t0,
        q,
        init_level,
        method: ThresholdMethod::Spot,
        t0,
        gpd: None,
        n,
        peak_count: peaks.len(),
        no_peaks: peaks.is_empty(),
    };
    if peaks.is_empty() {
        return Ok(decision);
    }
    let fit = if peaks.len() >= MIN_PEAKS {
        fit_gpd(&peaks)?
    } else {
        GpdFit {
            gamma: 0.0,
            sigma: peaks.iter().sum::<f64>() / peaks.len() as f64,
            peak_count: peaks.len(),
            from_root: false,
        }
    };
    let max = sorted[n - 1];
    let delta = tail_quantile(t0, fit.gamma, fit.sigma, q, n, peaks.len());
    decision.delta = delta.min(max + fit.sigma).max(t0);
    decision.gpd = Some(fit);
    Ok(decision)
}

/// Plain quantile threshold, `delta = level` quantile of the scores.
pub fn fixed_quantile_threshold<T: Scalar>(scores: &[T], level: f64) -> Result<ThresholdDecision> {
    check_level("level", level)?;
    let mut sorted = widen_checked(scores)?;
    sorted.sort_by(f64::total_cmp);
    let t0 = empirical_quantile(&sorted, level);
    let peak_count = sorted.iter().filter(|&&s| s > t0).count();
    Ok(ThresholdDecision {
        delta: t0,
        q: 1.0 - level,
        init_level: level,
        method: ThresholdMethod::FixedQuantile,
        t0,
        gpd: None,
        n: sorted.len(),
        peak_count,
        no_peaks: peak_count == 0,
    })
}

/// `1` where the score strictly exceeds `delta`.
pub fn apply_threshold<T: Scalar>(scores: &[T], delta: f64) -> LabelSeries {
    LabelSeries::from_bools(scores.iter().map(|s| s.widen() > delta))
}
