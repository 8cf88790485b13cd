use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{ActiveRows, AdapterError, Result};
use crate::scalar::Scalar;
use crate::similarity::SimilarityMatrix;

/// Added to the mean reachability distance before inverting, so duplicated
/// points give a large but finite density.
pub const LRD_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LofParams {
    pub neighbors: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        Self { neighbors: 10 }
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Local outlier factors from a dense row-major distance matrix. Exactly
/// `k` neighbors are used per point: ties at the k-distance go to the lower
/// index.
pub fn lof_from_distances(dist: &[f64], n: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(AdapterError::InvalidParams("LOF needs at least one neighbor".into()));
    }
    if n < k + 1 {
        return Err(AdapterError::TooFewPoints { neighbors: k, rows: n });
    }
    let mut neighbors = vec![0usize; n * k];
    let mut k_dist = vec![0.0f64; n];
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for t in 0..n {
        candidates.clear();
        let row = &dist[t * n..(t + 1) * n];
        candidates.extend(row.iter().copied().enumerate().filter(|&(j, _)| j != t).map(|(j, d)| (d, j)));
        if k < candidates.len() {
            candidates.select_nth_unstable_by(k - 1, by_distance_then_index);
        }
        let nearest = &mut candidates[..k];
        nearest.sort_unstable_by(by_distance_then_index);
        k_dist[t] = nearest[k - 1].0;
        for (slot, &(_, j)) in neighbors[t * k..(t + 1) * k].iter_mut().zip(nearest.iter()) {
            *slot = j;
        }
    }

    let lrd: Vec<f64> = (0..n)
        .map(|t| {
            let row = &dist[t * n..(t + 1) * n];
            let reach: f64 = neighbors[t * k..(t + 1) * k]
                .iter()
                .map(|&j| row[j].max(k_dist[j]))
                .sum();
            1.0 / (reach / k as f64 + LRD_EPSILON)
        })
        .collect();

    Ok((0..n)
        .map(|t| {
            let ratio: f64 = neighbors[t * k..(t + 1) * k].iter().map(|&j| lrd[j] / lrd[t]).sum();
            ratio / k as f64
        })
        .collect())
}

/// LOF scores over distances `max(S) - S` (diagonal forced to 0).
pub fn lof_score<T: Scalar>(s: &SimilarityMatrix<T>, params: &LofParams) -> Result<Vec<T>> {
    let k = params.neighbors;
    if k == 0 || s.size() < k + 1 {
        return Err(if k == 0 {
            AdapterError::InvalidParams("LOF needs at least one neighbor".into())
        } else {
            AdapterError::TooFewPoints {
                neighbors: k,
                rows: s.size(),
            }
        });
    }
    let max = s.max_entry().widen();
    let mut active = ActiveRows::of(s);
    let n = active.len();
    if n < k + 1 {
        return Ok(vec![T::zero(); s.size()]);
    }
    for (i, d) in active.dense.iter_mut().enumerate() {
        *d = if i / n == i % n { 0.0 } else { max - *d };
    }
    let lof = lof_from_distances(&active.dense, n, k)?;
    Ok(active.scatter(s.size(), &lof))
}
