//! Batching of embedding rows and the windowed absolute similarity matrix.

use std::ops::Range;

use thiserror::Error;

use crate::dataset_io::WindowPlan;
use crate::embedding_store::{EmbeddingError, EmbeddingSequence};
use crate::scalar::Scalar;

/// Rows with an L2 norm below this carry no direction and are flagged.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("a similarity batch needs at least 2 rows, got {0}")]
    DegenerateBatch(usize),
    #[error("batch size must be positive")]
    ZeroBatchSize,
    #[error("embedding block of {len} values is not a whole number of {dim}-dimensional rows")]
    RaggedRows { len: usize, dim: usize },
    #[error("{0}")]
    InvalidMatrix(String),
    #[error("embeddings hold {actual} rows but the window plan needs {expected}")]
    RowCountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T> = std::result::Result<T, SimilarityError>;

/// Consecutive groups of `batch_size` windows; the last group may be short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPartition {
    pub batch_size: usize,
    /// Window-index range of each batch.
    pub batches: Vec<Range<usize>>,
    pub rows_per_batch: usize,
}

pub fn partition_batches(plan: &WindowPlan, batch_size: usize) -> Result<BatchPartition> {
    if batch_size == 0 {
        return Err(SimilarityError::ZeroBatchSize);
    }
    let windows = plan.num_windows();
    let batches = (0..windows)
        .step_by(batch_size)
        .map(|start| start..(start + batch_size).min(windows))
        .collect();
    Ok(BatchPartition {
        batch_size,
        batches,
        rows_per_batch: batch_size * plan.window_length,
    })
}

impl BatchPartition {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Embedding rows covered by batch `b`.
    pub fn row_range(&self, plan: &WindowPlan, b: usize) -> Range<usize> {
        let windows = &self.batches[b];
        plan.row_offset(windows.start)..plan.row_offset(windows.end)
    }

    /// Timestep of each row of batch `b` (`None` for padding).
    pub fn row_timesteps(&self, plan: &WindowPlan, b: usize) -> Vec<Option<usize>> {
        self.batches[b]
            .clone()
            .flat_map(|w| plan.window_timesteps(w))
            .collect()
    }
}

/// Symmetric `m x m` matrix of absolute cosine similarities for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    size: usize,
    entries: Vec<T>,
    zero_rows: Vec<bool>,
    pub batch_index: usize,
    /// Original timestep of each row; `None` marks padding. Empty when the
    /// matrix was built without a window plan.
    pub row_timesteps: Vec<Option<usize>>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    /// Wraps a dense row-major matrix, checking symmetry and range.
    pub fn from_dense(size: usize, entries: Vec<T>) -> Result<Self> {
        if size < 2 {
            return Err(SimilarityError::DegenerateBatch(size));
        }
        if entries.len() != size * size {
            return Err(SimilarityError::InvalidMatrix(format!(
                "{} entries for a {size}x{size} matrix",
                entries.len()
            )));
        }
        for i in 0..size {
            for j in i..size {
                let a = entries[i * size + j].widen();
                let b = entries[j * size + i].widen();
                if !(0.0..=1.0).contains(&a) || (a - b).abs() > 1e-6 {
                    return Err(SimilarityError::InvalidMatrix(format!(
                        "entry ({i},{j}) = {a} breaks symmetry or [0,1] range"
                    )));
                }
            }
        }
        Ok(Self {
            size,
            entries,
            zero_rows: vec![false; size],
            batch_index: 0,
            row_timesteps: Vec::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    pub fn is_zero_row(&self, i: usize) -> bool {
        self.zero_rows[i]
    }

    pub fn zero_rows(&self) -> &[bool] {
        &self.zero_rows
    }

    pub fn max_entry(&self) -> T {
        self.entries.iter().copied().fold(T::zero(), T::max)
    }

    pub fn with_context(mut self, batch_index: usize, row_timesteps: Vec<Option<usize>>) -> Self {
        self.batch_index = batch_index;
        self.row_timesteps = row_timesteps;
        self
    }

    /// Dumps the matrix as a single-column `THEM` sequence (`n = m^2`).
    pub fn to_embedding_dump(&self) -> Result<EmbeddingSequence> {
        let values = self.entries.iter().map(|v| v.widen() as f32).collect();
        Ok(EmbeddingSequence::from_column(
            values,
            format!("wasm-batch-{}", self.batch_index),
        )?)
    }
}

/// Builds the similarity matrix of `m` embedding rows of dimension `dim`,
/// given row-major. Dot products and norms accumulate in `f64`.
pub fn build_wasm<T: Scalar>(rows: &[T], dim: usize) -> Result<SimilarityMatrix<T>> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(SimilarityError::RaggedRows { len: rows.len(), dim });
    }
    let m = rows.len() / dim;
    if m < 2 {
        return Err(SimilarityError::DegenerateBatch(m));
    }
    let wide: Vec<f64> = rows.iter().map(|v| v.widen()).collect();
    let norms: Vec<f64> = wide
        .chunks_exact(dim)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let zero_rows: Vec<bool> = norms.iter().map(|&n| n < ZERO_NORM).collect();

    let mut entries = vec![T::zero(); m * m];
    for i in 0..m {
        entries[i * m + i] = T::one();
        if zero_rows[i] {
            continue;
        }
        let zi = &wide[i * dim..(i + 1) * dim];
        for j in i + 1..m {
            if zero_rows[j] {
                continue;
            }
            let zj = &wide[j * dim..(j + 1) * dim];
            let dot: f64 = zi.iter().zip(zj).map(|(a, b)| a * b).sum();
            let s = T::narrow((dot / (norms[i] * norms[j])).abs().min(1.0));
            entries[i * m + j] = s;
            entries[j * m + i] = s;
        }
    }
    Ok(SimilarityMatrix {
        size: m,
        entries,
        zero_rows,
        batch_index: 0,
        row_timesteps: Vec::new(),
    })
}

/// Builds the matrix for batch `b` of an embedding sequence laid out by `plan`.
pub fn build_batch_wasm(
    embeddings: &EmbeddingSequence,
    plan: &WindowPlan,
    partition: &BatchPartition,
    b: usize,
) -> Result<SimilarityMatrix<f32>> {
    if embeddings.n() != plan.total_rows() {
        return Err(SimilarityError::RowCountMismatch {
            expected: plan.total_rows(),
            actual: embeddings.n(),
        });
    }
    let range = partition.row_range(plan, b);
    let s = build_wasm(embeddings.rows(range.start, range.end), embeddings.dim())?;
    Ok(s.with_context(b, partition.row_timesteps(plan, b)))
}
