//! Anomaly score adapters over a similarity matrix, score normalization,
//! and assembly of batch scores into a per-timestep series.
//!
//! Every adapter returns one raw score per matrix row, higher meaning more
//! anomalous. Rows flagged as zero-norm by the similarity builder carry no
//! direction: adapters run on the remaining rows and give flagged rows the
//! smallest score of the batch (0 if fewer than two rows remain).

mod assemble;
mod lof;
mod normalize;
mod similarity_mean;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::EigenError;
use crate::scalar::Scalar;
use crate::similarity::SimilarityMatrix;

pub use assemble::assemble_series_scores;
pub use lof::{lof_from_distances, lof_score, LofParams, LRD_EPSILON};
pub use normalize::{normalize_scores, normalize_scores_over, NORMALIZE_EPSILON};
pub use similarity_mean::{mean_similarity_score, trimmed_topk_score, TopK, TrimmedParams};
pub use spectral::{spectral_residual_score, SpectralBasis, SpectralParams, NULL_EIGENVALUE_RTOL};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("invalid adapter parameters: {0}")]
    InvalidParams(String),
    #[error("eigendecomposition failed: {0}")]
    EigensolveFailure(#[from] EigenError),
    #[error("LOF with {neighbors} neighbors needs at least {} rows, got {rows}", neighbors + 1)]
    TooFewPoints { neighbors: usize, rows: usize },
    #[error("trimming {trimmed} of {available} similarities leaves fewer than top_k = {top_k}")]
    TrimExhaustsData {
        available: usize,
        trimmed: usize,
        top_k: usize,
    },
    #[error("batch scores do not match the partition: {0}")]
    PartitionMismatch(String),
}

pub type Result<T> = std::result::Result<T, AdapterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Spectral,
    Lof,
    Mean,
    TrimmedTopk,
}

impl AdapterKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectral => "spectral",
            Self::Lof => "lof",
            Self::Mean => "mean",
            Self::TrimmedTopk => "trimmed",
        }
    }
}

/// An adapter together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adapter", rename_all = "snake_case")]
pub enum AdapterParams {
    Spectral(SpectralParams),
    Lof(LofParams),
    Mean,
    TrimmedTopk(TrimmedParams),
}

impl AdapterParams {
    pub fn kind(&self) -> AdapterKind {
        match self {
            Self::Spectral(_) => AdapterKind::Spectral,
            Self::Lof(_) => AdapterKind::Lof,
            Self::Mean => AdapterKind::Mean,
            Self::TrimmedTopk(_) => AdapterKind::TrimmedTopk,
        }
    }

    /// Raw per-row scores of one similarity matrix.
    pub fn score<T: Scalar>(&self, s: &SimilarityMatrix<T>) -> Result<Vec<T>> {
        match self {
            Self::Spectral(p) => spectral_residual_score(s, p),
            Self::Lof(p) => lof_score(s, p),
            Self::Mean => Ok(mean_similarity_score(s)),
            Self::TrimmedTopk(p) => trimmed_topk_score(s, p),
        }
    }
}

/// Per-timestep anomaly scores for a whole series.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries<T> {
    pub scores: Vec<T>,
    pub params: AdapterParams,
}

impl<T: Scalar> ScoreSeries<T> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn adapter(&self) -> AdapterKind {
        self.params.kind()
    }

    pub fn widened(&self) -> Vec<f64> {
        self.scores.iter().map(|v| v.widen()).collect()
    }
}

/// Rows that are not zero-norm, and the dense `f64` similarity among them.
pub(crate) struct ActiveRows {
    pub rows: Vec<usize>,
    pub dense: Vec<f64>,
}

impl ActiveRows {
    pub fn of<T: Scalar>(s: &SimilarityMatrix<T>) -> Self {
        let rows: Vec<usize> = (0..s.size()).filter(|&i| !s.is_zero_row(i)).collect();
        let mut dense = Vec::with_capacity(rows.len() * rows.len());
        for &i in &rows {
            let row = s.row(i);
            dense.extend(rows.iter().map(|&j| row[j].widen()));
        }
        Self { rows, dense }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Spreads active-row scores back over all `size` rows.
    pub fn scatter<T: Scalar>(&self, size: usize, active_scores: &[f64]) -> Vec<T> {
        let fill = active_scores.iter().copied().fold(f64::INFINITY, f64::min);
        let fill = if fill.is_finite() { fill } else { 0.0 };
        let mut out = vec![T::narrow(fill); size];
        for (&r, &v) in self.rows.iter().zip(active_scores) {
            out[r] = T::narrow(v);
        }
        out
    }
}
