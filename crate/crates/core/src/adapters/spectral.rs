use serde::{Deserialize, Serialize};

use super::{ActiveRows, AdapterError, Result};
use crate::linalg::{top_eigenpairs, EigenSolver, TopEigen};
use crate::scalar::Scalar;
use crate::similarity::SimilarityMatrix;

/// Eigenvalues within this fraction of the largest one are treated as zero;
/// their eigenvectors span an arbitrary basis of a null space and are left
/// out of the retained subspace.
pub const NULL_EIGENVALUE_RTOL: f64 = 1e-9;

const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralParams {
    /// Eigenvectors retained.
    pub k: usize,
    #[serde(default)]
    pub solver: EigenSolver,
}

impl SpectralParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            solver: EigenSolver::Auto,
        }
    }
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self::new(15)
    }
}

/// Leading eigenpairs of one batch's similarity matrix. Computing the basis
/// once for the largest `k` of interest lets scores for every smaller `k`
/// be read off without another decomposition.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    size: usize,
    active: Vec<usize>,
    pairs: Option<TopEigen<f64>>,
}

impl SpectralBasis {
    pub fn compute<T: Scalar>(s: &SimilarityMatrix<T>, k_max: usize, solver: EigenSolver) -> Result<Self> {
        if k_max == 0 || k_max > s.size() {
            return Err(AdapterError::InvalidParams(format!(
                "spectral k = {k_max} must be in 1..={}",
                s.size()
            )));
        }
        let active = ActiveRows::of(s);
        let pairs = if active.len() >= 2 {
            let k = k_max.min(active.len());
            Some(top_eigenpairs(&active.dense, active.len(), k, solver)?)
        } else {
            None
        };
        Ok(Self {
            size: s.size(),
            active: active.rows,
            pairs,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.pairs.as_ref().map_or(&[], |p| &p.values)
    }

    /// `1 - |e_t| / max_j |e_j|` using the leading `k` eigenvectors.
    pub fn scores<T: Scalar>(&self, k: usize) -> Result<Vec<T>> {
        let Some(pairs) = &self.pairs else {
            return Ok(vec![T::zero(); self.size]);
        };
        if k == 0 || k > self.size {
            return Err(AdapterError::InvalidParams(format!(
                "spectral k = {k} must be in 1..={}",
                self.size
            )));
        }
        if k > pairs.len() && pairs.len() < self.active.len() {
            return Err(AdapterError::InvalidParams(format!(
                "basis holds {} eigenpairs, {k} requested",
                pairs.len()
            )));
        }
        let n = pairs.size();
        let lead = pairs.values[0];
        let mut norms = vec![0.0f64; n];
        for i in 0..k.min(pairs.len()) {
            if pairs.values[i].abs() <= NULL_EIGENVALUE_RTOL * lead {
                continue;
            }
            for (acc, &q) in norms.iter_mut().zip(pairs.vector(i)) {
                *acc += q * q;
            }
        }
        norms.iter_mut().for_each(|v| *v = v.sqrt());
        let max = norms.iter().copied().fold(0.0, f64::max);
        let scores: Vec<f64> = if max < DEGENERATE_NORM {
            vec![0.0; n]
        } else {
            norms.iter().map(|&v| (1.0 - v / max).clamp(0.0, 1.0)).collect()
        };
        let active = ActiveRows {
            rows: self.active.clone(),
            dense: Vec::new(),
        };
        Ok(active.scatter(self.size, &scores))
    }
}

/// Spectral residual scores: rows poorly represented in the leading
/// eigenspace of `S` score high.
pub fn spectral_residual_score<T: Scalar>(s: &SimilarityMatrix<T>, params: &SpectralParams) -> Result<Vec<T>> {
    SpectralBasis::compute(s, params.k, params.solver)?.scores(params.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::build_wasm;

    fn block_matrix(n_inliers: usize, within: f64, across: f64) -> SimilarityMatrix<f64> {
        let m = n_inliers + 1;
        let mut e = vec![within; m * m];
        for i in 0..m {
            e[i * m + n_inliers] = across;
            e[n_inliers * m + i] = across;
            e[i * m + i] = 1.0;
        }
        SimilarityMatrix::from_dense(m, e).unwrap()
    }

    #[test]
    fn all_ones_scores_zero() {
        let s = SimilarityMatrix::from_dense(6, vec![1.0f64; 36]).unwrap();
        let scores = spectral_residual_score(&s, &SpectralParams::new(1)).unwrap();
        assert!(scores.iter().all(|&v| v.abs() < 1e-12), "{scores:?}");
        // the null space beyond the first eigenvector is ignored
        let scores = spectral_residual_score(&s, &SpectralParams::new(3)).unwrap();
        assert!(scores.iter().all(|&v| v.abs() < 1e-12), "{scores:?}");
    }

    #[test]
    fn isolated_row_scores_highest() {
        // 5 rows at 0.99 to each other, 1 row at 0.1 to all.
        let s = block_matrix(5, 0.99, 0.1);
        let scores = spectral_residual_score(&s, &SpectralParams::new(1)).unwrap();
        let argmax = (0..6).max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap()).unwrap();
        assert_eq!(argmax, 5, "{scores:?}");
        assert!(scores.iter().any(|&v| v == 0.0));
    }

    #[test]
    fn second_eigenvector_absorbs_isolated_row() {
        // with k = 2 the retained space is span{1_5, e_6}: the isolated row
        // has unit norm there and the inliers 1/sqrt(5)
        let s = block_matrix(5, 0.99, 0.1);
        let scores = spectral_residual_score(&s, &SpectralParams::new(2)).unwrap();
        assert!(scores[5].abs() < 1e-12);
        for &v in &scores[..5] {
            assert!((v - (1.0 - 0.2f64.sqrt())).abs() < 1e-12, "{scores:?}");
        }
    }

    #[test]
    fn isolated_row_expected_values() {
        // Independent check via the closed form of the leading eigenvector of
        // [[a J5 + (1-a) I, c 1], [c 1^T, 1]]: with k = 1 the leading vector
        // is (x 1_5, y) and the isolated row scores 1 - |y| / |x|.
        let (a, c) = (0.99f64, 0.1f64);
        // restricted to span{1_5/sqrt5, e6}: [[1 + 4a, c sqrt5], [c sqrt5, 1]]
        let (p, q, r) = (1.0 + 4.0 * a, c * 5f64.sqrt(), 1.0);
        let lambda = 0.5 * (p + r) + (0.25 * (p - r).powi(2) + q * q).sqrt();
        // eigenvector (q, lambda - p) in the reduced basis
        let x = q / 5f64.sqrt();
        let y = lambda - p;
        let expected = 1.0 - y.abs() / x.abs();
        let s = block_matrix(5, a, c);
        let scores = spectral_residual_score(&s, &SpectralParams::new(1)).unwrap();
        assert!((scores[5] - expected).abs() < 1e-10, "{} vs {expected}", scores[5]);
        assert!(scores[..5].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_rows_get_batch_minimum() {
        let rows = [1.0f64, 0.1, 0.0, 0.0, 0.9, 0.2, -0.1, 1.0];
        let s = build_wasm(&rows, 2).unwrap();
        let scores = spectral_residual_score(&s, &SpectralParams::new(1)).unwrap();
        let min = [scores[0], scores[2], scores[3]].into_iter().fold(f64::INFINITY, f64::min);
        assert_eq!(scores[1], min);
    }

    #[test]
    fn all_zero_rows_score_zero() {
        let s = build_wasm(&[0.0f32; 12], 3).unwrap();
        let scores = spectral_residual_score(&s, &SpectralParams::new(2)).unwrap();
        assert_eq!(scores, vec![0.0; 4]);
    }

    #[test]
    fn k_out_of_range() {
        let s = block_matrix(3, 0.5, 0.2);
        assert!(spectral_residual_score(&s, &SpectralParams::new(0)).is_err());
        assert!(spectral_residual_score(&s, &SpectralParams::new(5)).is_err());
    }

    #[test]
    fn basis_reuse_matches_direct() {
        let s = block_matrix(7, 0.7, 0.3);
        let basis = SpectralBasis::compute(&s, 4, EigenSolver::Full).unwrap();
        for k in 1..=4 {
            let direct = spectral_residual_score(&s, &SpectralParams { k, solver: EigenSolver::Full }).unwrap();
            assert_eq!(basis.scores::<f64>(k).unwrap(), direct);
        }
    }
}
