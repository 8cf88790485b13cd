use serde::{Deserialize, Serialize};

use super::{ActiveRows, AdapterError, Result};
use crate::scalar::Scalar;
use crate::similarity::SimilarityMatrix;

/// Mean-similarity scores `1 - mean_{j != t} S[t, j]`.
pub fn mean_similarity_score<T: Scalar>(s: &SimilarityMatrix<T>) -> Vec<T> {
    let active = ActiveRows::of(s);
    let n = active.len();
    if n < 2 {
        return vec![T::zero(); s.size()];
    }
    let scores: Vec<f64> = (0..n)
        .map(|t| {
            let row = &active.dense[t * n..(t + 1) * n];
            let sum: f64 = row.iter().enumerate().filter(|&(j, _)| j != t).map(|(_, &v)| v).sum();
            1.0 - sum / (n - 1) as f64
        })
        .collect();
    active.scatter(s.size(), &scores)
}

/// How many of the trimmed similarities are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopK {
    Count(usize),
    /// `ceil(fraction * n_t)`, at least 1.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedParams {
    /// Fraction trimmed from each end of the sorted similarities, in `[0, 0.5)`.
    pub alpha: f64,
    pub top_k: TopK,
}

impl Default for TrimmedParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            top_k: TopK::Fraction(0.1),
        }
    }
}

impl TrimmedParams {
    /// Top-k count for a row with `n_t` off-diagonal similarities.
    pub fn resolve_top_k(&self, n_t: usize) -> usize {
        match self.top_k {
            TopK::Count(k) => k,
            TopK::Fraction(f) => ((f * n_t as f64).ceil() as usize).max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.alpha) {
            return Err(AdapterError::InvalidParams(format!(
                "trim fraction {} outside [0, 0.5)",
                self.alpha
            )));
        }
        match self.top_k {
            TopK::Count(0) => Err(AdapterError::InvalidParams("top_k must be positive".into())),
            TopK::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(AdapterError::InvalidParams(format!(
                "top_k fraction {f} outside (0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

/// Trimmed top-k similarity scores: per row, sort the off-diagonal
/// similarities, drop `floor(alpha * n_t)` from each end, average the
/// `top_k` largest survivors and score `1 - average`.
///
/// The survivors are summed in column order, so `alpha = 0` with
/// `top_k = n_t` reproduces [`mean_similarity_score`] bit for bit.
pub fn trimmed_topk_score<T: Scalar>(s: &SimilarityMatrix<T>, params: &TrimmedParams) -> Result<Vec<T>> {
    params.validate()?;
    let n_full = s.size() - 1;
    let trimmed = (params.alpha * n_full as f64).floor() as usize;
    let top_k = params.resolve_top_k(n_full);
    if n_full < 2 * trimmed + top_k {
        return Err(AdapterError::TrimExhaustsData {
            available: n_full,
            trimmed: 2 * trimmed,
            top_k,
        });
    }

    let active = ActiveRows::of(s);
    let n = active.len();
    if n < 2 {
        return Ok(vec![T::zero(); s.size()]);
    }
    let n_t = n - 1;
    let trimmed = (params.alpha * n_t as f64).floor() as usize;
    let top_k = params.resolve_top_k(n_t).min(n_t - 2 * trimmed);

    let mut order: Vec<usize> = Vec::with_capacity(n_t);
    let scores: Vec<f64> = (0..n)
        .map(|t| {
            let row = &active.dense[t * n..(t + 1) * n];
            order.clear();
            order.extend((0..n).filter(|&j| j != t));
            order.sort_unstable_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            let kept = &mut order[trimmed..n_t - trimmed];
            let len = kept.len();
            let top = &mut kept[len - top_k..];
            top.sort_unstable();
            let sum: f64 = top.iter().map(|&j| row[j]).sum();
            1.0 - sum / top_k as f64
        })
        .collect();
    Ok(active.scatter(s.size(), &scores))
}
