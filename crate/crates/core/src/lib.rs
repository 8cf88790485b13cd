//! Zero-shot anomaly detection for univariate time series from pretrained
//! embeddings.
//!
//! Embeddings of each timestep are grouped into batches of fixed-length
//! windows, turned into an absolute cosine similarity matrix per batch,
//! scored by one of four adapters, min-max normalized, thresholded with
//! SPOT and evaluated with affiliation metrics.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the types used by the pipeline and the CLI.

pub mod adapters;
pub mod dataset_io;
pub mod embedding_store;
pub mod evaluation;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod similarity;
pub mod synthetic;
pub mod thresholding;

pub use scalar::Scalar;

/// Similarity matrix as stored per batch.
pub type Wasm = similarity::SimilarityMatrix<f32>;
/// Similarity matrix in double precision.
pub type Wasm64 = similarity::SimilarityMatrix<f64>;
/// Per-timestep scores produced by the pipeline.
pub type Scores = adapters::ScoreSeries<f64>;
pub type Scores32 = adapters::ScoreSeries<f32>;
pub type Gpd = thresholding::GpdFit<f64>;
pub type Eigen = linalg::SymmetricEigen<f64>;
