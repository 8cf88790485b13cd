//! Series and label loading, plus the window plan that maps embedding rows
//! back to timesteps.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("bad header in {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("channel {channel} out of range (file has {columns} columns)")]
    ChannelOutOfRange { channel: usize, columns: usize },
    #[error("non-finite value at data row {0}")]
    NonFiniteValue(usize),
    #[error("unparseable value {value:?} at data row {row}")]
    Parse { row: usize, value: String },
    #[error("label at row {0} is not 0 or 1")]
    NonBinaryLabel(usize),
    #[error("series {0} has no observations")]
    EmptySeries(String),
    #[error("label length {labels} does not match series length {series}")]
    LengthMismatch { series: usize, labels: usize },
    #[error("invalid window plan: {0}")]
    InvalidWindowPlan(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// On-disk layout of a series file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesFormat {
    /// Header row, one column per channel.
    Csv,
    /// NAB layout: `timestamp,value`; the timestamp column is ignored.
    NabCsv,
}

/// A univariate series of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(DatasetError::EmptySeries(name));
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteValue(row));
        }
        Ok(Self { name, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes a single-column CSV with the series name as header. Values use
    /// the shortest round-trip representation, so reloading is bit-exact.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = io::BufWriter::new(File::create(path)?);
        let header = if self.name.is_empty() { "value" } else { &self.name };
        writeln!(w, "{}", header.replace(',', "_"))?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Binary anomaly labels paired with a series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSeries {
    labels: Vec<u8>,
}

impl LabelSeries {
    /// Builds a label series; every element must be 0 or 1.
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(DatasetError::NonBinaryLabel(row));
        }
        Ok(Self { labels })
    }

    pub fn from_bools(flags: impl IntoIterator<Item = bool>) -> Self {
        Self {
            labels: flags.into_iter().map(u8::from).collect(),
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn check_paired(&self, series: &TimeSeries) -> Result<()> {
        if self.len() != series.len() {
            return Err(DatasetError::LengthMismatch {
                series: series.len(),
                labels: self.len(),
            });
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = io::BufWriter::new(File::create(path)?);
        writeln!(w, "label")?;
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn open_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?)
}

fn parse_cell(cell: &str, row: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| DatasetError::Parse {
        row,
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::NonFiniteValue(row));
    }
    Ok(v)
}

/// Loads one channel of a series file. Data rows are indexed from 0 in
/// error messages (the header is not counted).
pub fn load_series(path: impl AsRef<Path>, channel: usize, format: SeriesFormat) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut reader = open_reader(path, true)?;
    let headers = reader.headers()?.clone();
    let bad_header = |reason: &str| DatasetError::BadHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(bad_header("empty header row"));
    }
    // A header made only of numbers is a data row, i.e. the header is missing.
    if headers.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(bad_header("first row is numeric; a header row is required"));
    }

    let column = match format {
        SeriesFormat::Csv => {
            if channel >= headers.len() {
                return Err(DatasetError::ChannelOutOfRange {
                    channel,
                    columns: headers.len(),
                });
            }
            channel
        }
        SeriesFormat::NabCsv => {
            let has_ts = headers.iter().any(|h| h.eq_ignore_ascii_case("timestamp"));
            let value = headers.iter().position(|h| h.eq_ignore_ascii_case("value"));
            match (has_ts, value) {
                (true, Some(col)) => col,
                _ => return Err(bad_header("NAB files need `timestamp` and `value` columns")),
            }
        }
    };

    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(column).unwrap_or("");
        values.push(parse_cell(cell, row)?);
    }
    let name = match format {
        SeriesFormat::Csv => headers.get(column).unwrap_or("").to_string(),
        SeriesFormat::NabCsv => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    TimeSeries::new(name, values)
}

/// Loads a single-column 0/1 label file with an optional `label` header.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSeries> {
    let path = path.as_ref();
    let mut reader = open_reader(path, false)?;
    let mut labels = Vec::new();
    let mut row = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(0).unwrap_or("");
        if line == 0 && cell.eq_ignore_ascii_case("label") {
            continue;
        }
        let label = match cell.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => return Err(DatasetError::NonBinaryLabel(row)),
        };
        labels.push(label);
        row += 1;
    }
    LabelSeries::new(labels)
}

/// What happens to the last window when the series length is not a multiple
/// of the stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Pad the last window to full length by repeating the final observation.
    #[default]
    PadRepeatLast,
    /// Shorten the last window to end at the series end.
    Truncate,
}

/// Layout of windows over a series. Each window contributes one embedding
/// row per position; rows are numbered consecutively across windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub series_len: usize,
    pub window_length: usize,
    pub stride: usize,
    pub window_starts: Vec<usize>,
    pub tail_policy: TailPolicy,
}

/// Plans windows of length `window_length` every `stride` steps until the
/// series end is covered. Strides longer than the window would leave gaps
/// and are rejected.
pub fn plan_windows(
    series_len: usize,
    window_length: usize,
    stride: usize,
    tail_policy: TailPolicy,
) -> Result<WindowPlan> {
    if series_len == 0 || window_length == 0 || stride == 0 {
        return Err(DatasetError::InvalidWindowPlan(format!(
            "T={series_len}, L={window_length}, stride={stride}: all must be positive"
        )));
    }
    if stride > window_length {
        return Err(DatasetError::InvalidWindowPlan(format!(
            "stride {stride} exceeds window length {window_length}"
        )));
    }
    let mut window_starts = vec![0];
    while window_starts.last().unwrap() + window_length < series_len {
        let next = window_starts.last().unwrap() + stride;
        window_starts.push(next);
    }
    Ok(WindowPlan {
        series_len,
        window_length,
        stride,
        window_starts,
        tail_policy,
    })
}

impl WindowPlan {
    pub fn num_windows(&self) -> usize {
        self.window_starts.len()
    }

    /// Number of embedding rows window `w` contributes.
    pub fn window_rows(&self, w: usize) -> usize {
        match self.tail_policy {
            TailPolicy::PadRepeatLast => self.window_length,
            TailPolicy::Truncate => self.window_length.min(self.series_len - self.window_starts[w]),
        }
    }

    /// Padded positions in window `w`.
    pub fn pad_count(&self, w: usize) -> usize {
        let start = self.window_starts[w];
        self.window_rows(w) - self.window_length.min(self.series_len - start)
    }

    pub fn total_pads(&self) -> usize {
        (0..self.num_windows()).map(|w| self.pad_count(w)).sum()
    }

    /// First embedding row of window `w`.
    pub fn row_offset(&self, w: usize) -> usize {
        match self.tail_policy {
            TailPolicy::PadRepeatLast => w * self.window_length,
            TailPolicy::Truncate => (0..w).map(|i| self.window_rows(i)).sum(),
        }
    }

    pub fn total_rows(&self) -> usize {
        self.row_offset(self.num_windows())
    }

    /// Position in the (conceptually padded) series of every row of window
    /// `w`; positions `>= series_len` are padding.
    pub fn window_positions(&self, w: usize) -> std::ops::Range<usize> {
        let start = self.window_starts[w];
        start..start + self.window_rows(w)
    }

    /// Timestep owned by each row of window `w`, `None` for padding.
    pub fn window_timesteps(&self, w: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let len = self.series_len;
        self.window_positions(w).map(move |p| (p < len).then_some(p))
    }

    /// Timestep of every embedding row in order.
    pub fn row_timesteps(&self) -> Vec<Option<usize>> {
        (0..self.num_windows())
            .flat_map(|w| self.window_timesteps(w))
            .collect()
    }
}
