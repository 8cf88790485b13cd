use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::adapters::{AdapterParams, TopK};
use crate::dataset_io::SeriesFormat;

pub const DEFAULT_WINDOW: usize = 512;
pub const DEFAULT_BATCH_WINDOWS: usize = 16;
pub const DEFAULT_REF_CONTEXT: usize = 32;
pub const DEFAULT_REF_DIM: usize = 64;

/// Where the per-row embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// A `THEM` file laid out by the same window plan.
    File { path: PathBuf },
    /// The seeded reference embedder.
    Reference { context: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeScope {
    /// Min-max over the real rows of each batch, before assembly.
    #[default]
    Batch,
    /// Min-max once over the assembled series.
    Global,
}

impl FromStr for NormalizeScope {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Self::Batch),
            "global" => Ok(Self::Global),
            other => Err(PipelineError::Config(format!(
                "normalize scope {other:?} is not one of batch, global"
            ))),
        }
    }
}

/// Everything a run depends on. Serialized verbatim into `manifest.json`,
/// which is enough to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub series: PathBuf,
    pub channel: usize,
    pub format: SeriesFormat,
    pub labels: Option<PathBuf>,
    pub embeddings: EmbeddingSource,
    pub adapter: AdapterParams,
    pub window: usize,
    /// Defaults to `window` (tumbling windows).
    pub stride: Option<usize>,
    pub batch_windows: usize,
    pub normalize_scope: NormalizeScope,
    pub spot_q: f64,
    pub spot_init: f64,
    pub calibration_file: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    /// Batches whose similarity matrix is dumped for plotting.
    #[serde(default)]
    pub dump_wasm: Vec<usize>,
}

impl RunConfig {
    /// Defaults for everything except the series path.
    pub fn new(series: impl Into<PathBuf>) -> Self {
        Self {
            series: series.into(),
            channel: 0,
            format: SeriesFormat::Csv,
            labels: None,
            embeddings: EmbeddingSource::Reference {
                context: DEFAULT_REF_CONTEXT,
                dim: DEFAULT_REF_DIM,
            },
            adapter: AdapterParams::Spectral(Default::default()),
            window: DEFAULT_WINDOW,
            stride: None,
            batch_windows: DEFAULT_BATCH_WINDOWS,
            normalize_scope: NormalizeScope::Batch,
            spot_q: 1e-3,
            spot_init: 0.98,
            calibration_file: None,
            seed: 0,
            out: PathBuf::from("themis-out"),
            jobs: default_jobs(),
            dump_wasm: Vec::new(),
        }
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(PipelineError::Config(msg));
        if self.window == 0 || self.batch_windows == 0 {
            return fail(format!(
                "window ({}) and batch-windows ({}) must be positive",
                self.window, self.batch_windows
            ));
        }
        if !(1..=self.window).contains(&self.stride()) {
            return fail(format!("stride {} must be in 1..={}", self.stride(), self.window));
        }
        for (name, v) in [("spot-q", self.spot_q), ("spot-init", self.spot_init)] {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if self.jobs == 0 {
            return fail("jobs must be positive".into());
        }
        if let EmbeddingSource::Reference { context, dim } = self.embeddings {
            if context == 0 || dim == 0 {
                return fail(format!("reference embedder needs positive context and dim, got {context}, {dim}"));
            }
        }
        Ok(())
    }
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// skipped; keys are normalized to flag spelling (`batch_windows` and
/// `--batch-windows` both become `batch-windows`).
pub fn parse_flat_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(PipelineError::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(PipelineError::Config(format!("line {}: empty key", i + 1)));
        }
        let value = value.trim().trim_matches('"').to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(PipelineError::Config(format!("line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(map)
}

/// `10` is a count, `0.1` a fraction of the row's similarities.
pub fn parse_top_k(s: &str) -> Result<TopK> {
    let bad = || PipelineError::Config(format!("topk {s:?} is neither a count nor a fraction"));
    if s.contains('.') || s.contains('e') {
        s.parse::<f64>().map(TopK::Fraction).map_err(|_| bad())
    } else {
        s.parse::<usize>().map(TopK::Count).map_err(|_| bad())
    }
}

/// Comma-separated list, e.g. `2,5,10`.
pub fn parse_list<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(PipelineError::Config(format!("empty list {s:?}")));
    }
    Ok(items)
}
