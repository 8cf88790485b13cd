use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EmbeddingSource, RunConfig};
use super::run::{detect, load_inputs, score_series, Detection, ScoreRun, Timings};
use super::{PipelineError, Result};
use crate::dataset_io::{load_labels, load_series, DatasetError, TailPolicy};
use crate::embedding_store::{read_embeddings, write_embeddings, EmbeddingError, VERSION};
use crate::thresholding::ThresholdReport;

pub const SCORES_FILE: &str = "scores.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const THRESHOLD_FILE: &str = "threshold.json";
pub const REPORT_FILE: &str = "report.json";

/// Written next to every run's outputs; `config` alone reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub embedding_format_version: u32,
    pub embedding_source: String,
    pub series_name: String,
    pub series_len: usize,
    pub windows: usize,
    pub pad_rows: usize,
    pub batches: usize,
    pub outputs: Vec<String>,
    pub timings: Timings,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig, run: &ScoreRun, outputs: &[&str]) -> Self {
        let inputs = &run.inputs;
        Self {
            tool: "themis".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            embedding_format_version: VERSION,
            embedding_source: inputs.embeddings.source_tag.clone(),
            series_name: inputs.series.name.clone(),
            series_len: inputs.series.len(),
            windows: inputs.plan.num_windows(),
            pad_rows: inputs.plan.total_pads(),
            batches: run.partition.len(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            timings: run.timings,
        }
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
    serde_json::from_str(&text).map_err(PipelineError::json(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(PipelineError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(PipelineError::io(path))
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let io = PipelineError::io;
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    writeln!(w, "{header}").map_err(io(path))?;
    for row in rows {
        writeln!(w, "{row}").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_scores_csv(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    write_lines(
        path.as_ref(),
        "timestep,score",
        scores.iter().enumerate().map(|(t, s)| format!("{t},{s}")),
    )
}

/// Reads a score file: the `score` column if the header has one, else the
/// last column.
pub fn read_score_column(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()).into());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(DatasetError::from)?;
    let headers = reader.headers().map_err(DatasetError::from)?.clone();
    let column = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("score"))
        .unwrap_or(headers.len().saturating_sub(1));
    let mut scores = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(DatasetError::from)?;
        let cell = record.get(column).unwrap_or("");
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => scores.push(v),
            Ok(_) => return Err(DatasetError::NonFiniteValue(row).into()),
            Err(_) => {
                return Err(DatasetError::Parse {
                    row,
                    value: cell.to_string(),
                }
                .into())
            }
        }
    }
    Ok(scores)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(PipelineError::io(dir))
}

/// Files written by a command, relative to its output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

fn dump_names(cfg: &RunConfig, run: &ScoreRun) -> Vec<String> {
    cfg.dump_wasm
        .iter()
        .filter(|&&b| b < run.partition.len())
        .map(|b| format!("wasm_batch_{b}.them"))
        .collect()
}

/// `score`: writes `scores.csv` and `manifest.json`.
pub fn cmd_score(cfg: &RunConfig) -> Result<(ScoreRun, RunOutputs)> {
    create_dir(&cfg.out)?;
    let run = score_series(cfg, Some(&cfg.out))?;
    write_scores_csv(cfg.out.join(SCORES_FILE), &run.scores.scores)?;
    let mut files = vec![SCORES_FILE.to_string()];
    files.extend(dump_names(cfg, &run));
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    write_json(&cfg.out.join(MANIFEST_FILE), &Manifest::new("score", cfg, &run, &names))?;
    files.push(MANIFEST_FILE.into());
    Ok((
        run,
        RunOutputs {
            dir: cfg.out.clone(),
            files,
        },
    ))
}

/// `detect`: scores, thresholds, and evaluates when labels are given.
pub fn cmd_detect(cfg: &RunConfig) -> Result<(Detection, RunOutputs)> {
    create_dir(&cfg.out)?;
    let det = detect(cfg, Some(&cfg.out))?;
    let dir = &cfg.out;
    write_scores_csv(dir.join(SCORES_FILE), &det.run.scores.scores)?;
    write_lines(
        &dir.join(PREDICTIONS_FILE),
        "timestep,prediction",
        det.predictions.as_slice().iter().enumerate().map(|(t, p)| format!("{t},{p}")),
    )?;
    write_json(&dir.join(THRESHOLD_FILE), &det.decision.report())?;
    let mut files = vec![SCORES_FILE.to_string(), PREDICTIONS_FILE.into(), THRESHOLD_FILE.into()];
    if let Some(report) = &det.report {
        write_json(&dir.join(REPORT_FILE), report)?;
        files.push(REPORT_FILE.into());
    }
    files.extend(dump_names(cfg, &det.run));
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    write_json(&dir.join(MANIFEST_FILE), &Manifest::new("detect", cfg, &det.run, &names))?;
    files.push(MANIFEST_FILE.into());
    Ok((det, RunOutputs { dir: dir.clone(), files }))
}

#[derive(Debug, Clone, Serialize)]
struct EmbeddingSidecar<'a> {
    source_tag: &'a str,
    n: usize,
    dim: usize,
    series: &'a Path,
    channel: usize,
    series_len: usize,
    window: usize,
    stride: usize,
    tail_policy: TailPolicy,
    pad_rows: usize,
    /// Row index of every padded position.
    pad_row_indices: Vec<usize>,
}

/// `embed-ref`: writes reference embeddings to `path` plus
/// `<path>.manifest.json`.
pub fn cmd_embed_ref(cfg: &RunConfig, path: &Path) -> Result<RunOutputs> {
    cfg.validate()?;
    if !matches!(cfg.embeddings, EmbeddingSource::Reference { .. }) {
        return Err(PipelineError::Config("embed-ref always uses the reference embedder".into()));
    }
    let inputs = load_inputs(cfg)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_embeddings(&inputs.embeddings, path)?;
    let sidecar = PathBuf::from(format!("{}.manifest.json", path.display()));
    let pad_row_indices = inputs
        .plan
        .row_timesteps()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_none())
        .map(|(i, _)| i)
        .collect();
    write_json(
        &sidecar,
        &EmbeddingSidecar {
            source_tag: &inputs.embeddings.source_tag,
            n: inputs.embeddings.n(),
            dim: inputs.embeddings.dim(),
            series: &cfg.series,
            channel: cfg.channel,
            series_len: inputs.series.len(),
            window: cfg.window,
            stride: cfg.stride(),
            tail_policy: inputs.plan.tail_policy,
            pad_rows: inputs.plan.total_pads(),
            pad_row_indices,
        },
    )?;
    let name = |p: &Path| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    Ok(RunOutputs {
        dir: path.parent().map_or_else(PathBuf::new, Path::to_path_buf),
        files: vec![name(path), name(&sidecar)],
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotDataReport {
    pub files: Vec<String>,
    pub wasm_batches: Vec<usize>,
}

fn wasm_dumps(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut dumps = Vec::new();
    for entry in fs::read_dir(dir).map_err(PipelineError::io(dir))? {
        let path = entry.map_err(PipelineError::io(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(b) = name
            .strip_prefix("wasm_batch_")
            .and_then(|r| r.strip_suffix(".them"))
            .and_then(|i| i.parse::<usize>().ok())
        {
            dumps.push((b, path));
        }
    }
    dumps.sort();
    Ok(dumps)
}

/// `plot-data`: flattens a run directory into plain CSVs for plotting.
pub fn cmd_plot_data(run_dir: &Path, out: &Path) -> Result<PlotDataReport> {
    let missing: Vec<String> = [MANIFEST_FILE, SCORES_FILE]
        .into_iter()
        .filter(|f| !run_dir.join(f).is_file())
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingArtifacts {
            dir: run_dir.to_path_buf(),
            missing,
        });
    }
    let manifest = load_manifest(run_dir.join(MANIFEST_FILE))?;
    let cfg = &manifest.config;
    let scores = read_score_column(run_dir.join(SCORES_FILE))?;
    let series = load_series(&cfg.series, cfg.channel, cfg.format)?;
    let labels = cfg.labels.as_ref().map(load_labels).transpose()?;
    if let Some(l) = &labels {
        l.check_paired(&series)?;
    }
    if scores.len() != series.len() {
        return Err(DatasetError::LengthMismatch {
            series: series.len(),
            labels: scores.len(),
        }
        .into());
    }
    let delta = match run_dir.join(THRESHOLD_FILE) {
        p if p.is_file() => {
            let text = fs::read_to_string(&p).map_err(PipelineError::io(&p))?;
            let report: ThresholdReport = serde_json::from_str(&text).map_err(PipelineError::json(&p))?;
            Some(report.delta)
        }
        _ => None,
    };

    create_dir(out)?;
    let mut files = Vec::new();
    let label_at = |t: usize| labels.as_ref().map_or(String::new(), |l| l.as_slice()[t].to_string());
    write_lines(
        &out.join("series_with_labels.csv"),
        "timestep,value,label",
        series.values().iter().enumerate().map(|(t, v)| format!("{t},{v},{}", label_at(t))),
    )?;
    files.push("series_with_labels.csv".to_string());
    let delta_cell = delta.map_or(String::new(), |d| d.to_string());
    write_lines(
        &out.join("scores_with_threshold.csv"),
        "timestep,score,threshold",
        scores.iter().enumerate().map(|(t, s)| format!("{t},{s},{delta_cell}")),
    )?;
    files.push("scores_with_threshold.csv".into());

    let mut wasm_batches = Vec::new();
    for (b, path) in wasm_dumps(run_dir)? {
        let dump = read_embeddings(&path)?;
        let m = (dump.n() as f64).sqrt().round() as usize;
        if dump.dim() != 1 || m * m != dump.n() {
            return Err(EmbeddingError::Shape(format!(
                "{} is not a square matrix dump (n = {}, d = {})",
                path.display(),
                dump.n(),
                dump.dim()
            ))
            .into());
        }
        let values = dump.as_slice();
        let name = format!("wasm_batch_{b}.csv");
        write_lines(
            &out.join(&name),
            "i,j,value",
            (0..m * m).map(|k| format!("{},{},{}", k / m, k % m, values[k])),
        )?;
        files.push(name);
        wasm_batches.push(b);
    }
    Ok(PlotDataReport { files, wasm_batches })
}
