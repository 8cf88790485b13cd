//! Adaptive anomaly thresholds from the upper tail of a score series.
//!
//! The tail above an initial high quantile is modelled with a Generalized
//! Pareto distribution; the threshold is the level exceeded with probability
//! `q` under that model (peaks-over-threshold, fitted once over the series).

mod gpd;
mod spot;

use thiserror::Error;

pub use gpd::{fit_gpd, gpd_log_likelihood, GpdFit, MIN_PEAKS};
pub use spot::{
    apply_threshold, empirical_quantile, fixed_quantile_threshold, spot_threshold, tail_quantile, ThresholdDecision,
    ThresholdMethod, ThresholdReport, EXPONENTIAL_GAMMA_TOL,
};

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("GPD fit needs at least {required} peaks, got {found}")]
    TooFewPeaks { found: usize, required: usize },
    #[error("peak {0} is not a positive finite excess")]
    InvalidPeak(f64),
    #[error("cannot threshold an empty score series")]
    EmptyScores,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("invalid threshold parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, ThresholdError>;
