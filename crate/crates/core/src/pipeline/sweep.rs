use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{assemble, load_inputs, parallel_map, raw_batch_scores, threshold_scores, Inputs};
use super::{PipelineError, Result};
use crate::adapters::{AdapterKind, AdapterParams, LofParams, SpectralBasis, SpectralParams, TopK, TrimmedParams};
use crate::evaluation::{evaluate, EvaluationReport};
use crate::linalg::EigenSolver;
use crate::similarity::{build_batch_wasm, partition_batches};
use crate::thresholding::{apply_threshold, ThresholdReport};

pub const RESULTS_FILE: &str = "results.csv";

/// Values to try per parameter. Each adapter only expands the lists it
/// uses, so `{adapters: [mean], k: [2, 5]}` is a single point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub adapters: Vec<AdapterKind>,
    pub batch_windows: Vec<usize>,
    pub k: Vec<usize>,
    pub knn: Vec<usize>,
    pub alpha: Vec<f64>,
    pub top_k: Vec<TopK>,
}

impl SweepGrid {
    /// A single-point grid equal to `cfg`.
    pub fn from_config(cfg: &RunConfig) -> Self {
        let mut grid = Self {
            adapters: vec![cfg.adapter.kind()],
            batch_windows: vec![cfg.batch_windows],
            k: vec![SpectralParams::default().k],
            knn: vec![LofParams::default().neighbors],
            alpha: vec![TrimmedParams::default().alpha],
            top_k: vec![TrimmedParams::default().top_k],
        };
        match cfg.adapter {
            AdapterParams::Spectral(p) => grid.k = vec![p.k],
            AdapterParams::Lof(p) => grid.knn = vec![p.neighbors],
            AdapterParams::TrimmedTopk(p) => {
                grid.alpha = vec![p.alpha];
                grid.top_k = vec![p.top_k];
            }
            AdapterParams::Mean => {}
        }
        grid
    }

    /// Grid points in output order: adapter, then batch size, then the
    /// adapter's own parameters.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &kind in &self.adapters {
            for &batch_windows in &self.batch_windows {
                let params: Vec<AdapterParams> = match kind {
                    AdapterKind::Spectral => self.k.iter().map(|&k| AdapterParams::Spectral(SpectralParams::new(k))).collect(),
                    AdapterKind::Lof => self
                        .knn
                        .iter()
                        .map(|&neighbors| AdapterParams::Lof(LofParams { neighbors }))
                        .collect(),
                    AdapterKind::Mean => vec![AdapterParams::Mean],
                    AdapterKind::TrimmedTopk => self
                        .alpha
                        .iter()
                        .flat_map(|&alpha| {
                            self.top_k
                                .iter()
                                .map(move |&top_k| AdapterParams::TrimmedTopk(TrimmedParams { alpha, top_k }))
                        })
                        .collect(),
                };
                out.extend(params.into_iter().map(|adapter| SweepPoint { batch_windows, adapter }));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub batch_windows: usize,
    pub adapter: AdapterParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub outcome: std::result::Result<(ThresholdReport, EvaluationReport), String>,
}

const CSV_HEADER: &str = "adapter,batch_windows,k,knn,alpha,topk,delta,precision,recall,f1,anomaly_ratio,predicted_ratio,error";

impl SweepRow {
    pub fn f1(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|(_, e)| e.f1)
    }

    pub fn csv_row(&self) -> String {
        let p = &self.point;
        let (k, knn, alpha, topk) = match p.adapter {
            AdapterParams::Spectral(s) => (s.k.to_string(), String::new(), String::new(), String::new()),
            AdapterParams::Lof(l) => (String::new(), l.neighbors.to_string(), String::new(), String::new()),
            AdapterParams::Mean => Default::default(),
            AdapterParams::TrimmedTopk(t) => (
                String::new(),
                String::new(),
                t.alpha.to_string(),
                match t.top_k {
                    TopK::Count(c) => c.to_string(),
                    TopK::Fraction(f) => f.to_string(),
                },
            ),
        };
        let head = format!("{},{},{k},{knn},{alpha},{topk}", p.adapter.kind().name(), p.batch_windows);
        match &self.outcome {
            Ok((t, e)) => format!(
                "{head},{},{},{},{},{},{},",
                t.delta, e.precision, e.recall, e.f1, e.anomaly_ratio, e.predicted_ratio
            ),
            // quotes keep commas in messages from splitting the row
            Err(msg) => format!("{head},,,,,,,\"{}\"", msg.replace('"', "'")),
        }
    }
}

type BatchOutcome = std::result::Result<Vec<f64>, String>;

/// Raw scores of every point sharing one batch size, batch by batch. The
/// matrix of a batch is built once and, for spectral points, decomposed
/// once for the largest `k`.
fn batch_size_scores(
    inputs: &Inputs,
    batch_windows: usize,
    points: &[SweepPoint],
    jobs: usize,
) -> Result<Vec<Vec<BatchOutcome>>> {
    let partition = partition_batches(&inputs.plan, batch_windows)?;
    let k_max = points
        .iter()
        .filter_map(|p| match p.adapter {
            AdapterParams::Spectral(s) => Some(s.k),
            _ => None,
        })
        .max();
    let batches: Vec<usize> = (0..partition.len()).collect();
    parallel_map(&batches, jobs, |_, &b| {
        let s = build_batch_wasm(&inputs.embeddings, &inputs.plan, &partition, b)?;
        let basis = k_max.map(|k| SpectralBasis::compute(&s, k.min(s.size()), EigenSolver::Auto));
        Ok(points
            .iter()
            .map(|p| match (p.adapter, &basis) {
                (AdapterParams::Spectral(sp), Some(Ok(basis))) if sp.k <= s.size() => {
                    basis.scores::<f64>(sp.k).map_err(|e| format!("adapters: {e}"))
                }
                (AdapterParams::Spectral(sp), Some(Err(e))) if sp.k <= s.size() => Err(format!("adapters: {e}")),
                (adapter, _) => raw_batch_scores(&s, &adapter).map_err(|e| e.to_string()),
            })
            .collect())
    })
    .into_iter()
    .collect()
}

/// Runs every grid point against the labeled series in `cfg`. A failing
/// point is recorded in its row; only input errors abort the sweep.
pub fn run_sweep(cfg: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let points = grid.points();
    if points.is_empty() {
        return Err(PipelineError::Config("sweep grid is empty".into()));
    }
    if points.iter().any(|p| p.batch_windows == 0) {
        return Err(PipelineError::Config("batch-windows values must be positive".into()));
    }
    if cfg.labels.is_none() {
        return Err(PipelineError::Config("sweep needs --labels".into()));
    }
    let inputs = load_inputs(cfg)?;
    let labels = inputs.labels.as_ref().expect("labels were configured");

    let mut by_batch: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        by_batch.entry(p.batch_windows).or_default().push(i);
    }
    // raw[i][b]: scores of point i on batch b
    let mut raw: Vec<std::result::Result<Vec<BatchOutcome>, String>> = vec![Ok(Vec::new()); points.len()];
    for (&bw, idx) in &by_batch {
        let subset: Vec<SweepPoint> = idx.iter().map(|&i| points[i]).collect();
        match batch_size_scores(&inputs, bw, &subset, cfg.jobs) {
            Ok(per_batch) => {
                for per_point in per_batch {
                    for (slot, outcome) in idx.iter().zip(per_point) {
                        if let Ok(v) = &mut raw[*slot] {
                            v.push(outcome);
                        }
                    }
                }
            }
            Err(e) => {
                for &i in idx {
                    raw[i] = Err(e.to_string());
                }
            }
        }
    }

    let jobs: Vec<(SweepPoint, std::result::Result<Vec<BatchOutcome>, String>)> = points.into_iter().zip(raw).collect();
    Ok(parallel_map(&jobs, cfg.jobs, |_, (point, raw)| {
        let outcome = (|| -> std::result::Result<_, String> {
            let batches: Vec<Vec<f64>> = raw.clone()?.into_iter().collect::<std::result::Result<_, _>>()?;
            let partition = partition_batches(&inputs.plan, point.batch_windows).map_err(|e| e.to_string())?;
            let scores = assemble(batches, &partition, &inputs.plan, cfg.normalize_scope, point.adapter)
                .map_err(|e| e.to_string())?;
            let decision = threshold_scores(cfg, &scores.scores).map_err(|e| e.to_string())?;
            let pred = apply_threshold(&scores.scores, decision.delta);
            let report = evaluate(&pred, labels).map_err(|e| format!("evaluation: {e}"))?;
            Ok((decision.report(), report))
        })();
        SweepRow { point: *point, outcome }
    }))
}

#[derive(Debug, Serialize)]
struct SweepManifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    grid: &'a SweepGrid,
    points: usize,
    failed_points: usize,
    outputs: [&'a str; 1],
}

/// `sweep`: writes `results.csv` (grid order) and `manifest.json`.
pub fn cmd_sweep(cfg: &RunConfig, grid: &SweepGrid) -> Result<(Vec<SweepRow>, PathBuf)> {
    let rows = run_sweep(cfg, grid)?;
    fs::create_dir_all(&cfg.out).map_err(PipelineError::io(&cfg.out))?;
    let path = cfg.out.join(RESULTS_FILE);
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.csv_row());
        text.push('\n');
    }
    fs::write(&path, text).map_err(PipelineError::io(&path))?;
    let manifest = SweepManifest {
        tool: "themis",
        version: env!("CARGO_PKG_VERSION"),
        command: "sweep",
        config: cfg,
        grid,
        points: rows.len(),
        failed_points: rows.iter().filter(|r| r.outcome.is_err()).count(),
        outputs: [RESULTS_FILE],
    };
    let mpath = cfg.out.join(super::MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).map_err(PipelineError::json(&mpath))?;
    json.push('\n');
    fs::write(&mpath, json).map_err(PipelineError::io(&mpath))?;
    Ok((rows, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SweepGrid {
        SweepGrid {
            adapters: vec![AdapterKind::Spectral],
            batch_windows: vec![1, 4, 16],
            k: vec![2],
            knn: vec![10],
            alpha: vec![0.05],
            top_k: vec![TopK::Fraction(0.1)],
        }
    }

    #[test]
    fn cardinality_and_order() {
        let pts = grid().points();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts.iter().map(|p| p.batch_windows).collect::<Vec<_>>(), vec![1, 4, 16]);

        let mut g = grid();
        g.adapters = vec![AdapterKind::Mean, AdapterKind::TrimmedTopk, AdapterKind::Lof];
        g.batch_windows = vec![4];
        g.alpha = vec![0.0, 0.1];
        g.top_k = vec![TopK::Count(5), TopK::Fraction(0.2)];
        g.knn = vec![3, 5, 10];
        let kinds: Vec<_> = g.points().iter().map(|p| p.adapter.kind()).collect();
        assert_eq!(kinds.len(), 1 + 4 + 3);
        assert_eq!(kinds[0], AdapterKind::Mean);
        assert!(kinds[1..5].iter().all(|&k| k == AdapterKind::TrimmedTopk));
    }

    #[test]
    fn singleton_grid_from_config() {
        let mut cfg = RunConfig::new("x.csv");
        cfg.adapter = AdapterParams::Lof(LofParams { neighbors: 7 });
        let pts = SweepGrid::from_config(&cfg).points();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].adapter, cfg.adapter);
        assert_eq!(pts[0].batch_windows, cfg.batch_windows);
    }

    #[test]
    fn error_rows_keep_columns() {
        let row = SweepRow {
            point: grid().points()[0],
            outcome: Err("adapters: bad, \"really\"".into()),
        };
        let line = row.csv_row();
        assert!(line.starts_with("spectral,1,2,,,,"));
        assert!(line.ends_with("\"adapters: bad, 'really'\""));
    }
}
