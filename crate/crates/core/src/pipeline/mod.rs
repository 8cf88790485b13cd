//! End-to-end runs: load, embed, score, threshold, evaluate, and the files
//! each command leaves behind.

mod artifacts;
mod config;
mod run;
mod sweep;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::adapters::AdapterError;
use crate::dataset_io::DatasetError;
use crate::embedding_store::EmbeddingError;
use crate::evaluation::EvaluationError;
use crate::similarity::SimilarityError;
use crate::thresholding::ThresholdError;

pub use artifacts::{
    cmd_detect, cmd_embed_ref, cmd_plot_data, cmd_score, load_manifest, read_score_column, write_scores_csv,
    Manifest, PlotDataReport, RunOutputs, MANIFEST_FILE, PREDICTIONS_FILE, REPORT_FILE, SCORES_FILE,
    THRESHOLD_FILE,
};
pub use config::{
    default_jobs, parse_flat_config, parse_list, parse_top_k, EmbeddingSource, NormalizeScope, RunConfig,
    DEFAULT_BATCH_WINDOWS, DEFAULT_REF_CONTEXT, DEFAULT_REF_DIM, DEFAULT_WINDOW,
};
pub use run::{
    detect, load_inputs, parallel_map, score_batches, score_series, threshold_scores, Detection, Inputs,
    ScoreRun, Timings,
};
pub use sweep::{cmd_sweep, run_sweep, SweepGrid, SweepPoint, SweepRow, RESULTS_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset_io: {0}")]
    Dataset(#[from] DatasetError),
    #[error("embedding_store: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("similarity: {0}")]
    Similarity(#[from] SimilarityError),
    #[error("adapters: {0}")]
    Adapter(#[from] AdapterError),
    #[error("thresholding: {0}")]
    Threshold(#[from] ThresholdError),
    #[error("evaluation: {0}")]
    Evaluation(#[from] EvaluationError),
    #[error("config: {0}")]
    Config(String),
    #[error("plot-data: missing artifacts in {dir}: {missing:?}")]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("json: {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    /// Process exit status: 1 for bad inputs or configuration, 2 when the
    /// numerics fail on valid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Adapter(AdapterError::EigensolveFailure(_) | AdapterError::PartitionMismatch(_)) => 2,
            Self::Embedding(EmbeddingError::Overflow { .. }) => 2,
            Self::Threshold(e) => match e {
                ThresholdError::InvalidParams(_) | ThresholdError::EmptyScores => 1,
                _ => 2,
            },
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| Self::Json { path, source }
    }
}
