use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::read_score_column;
use super::config::{EmbeddingSource, NormalizeScope, RunConfig};
use super::{PipelineError, Result};
use crate::adapters::{
    assemble_series_scores, normalize_scores, normalize_scores_over, AdapterParams, ScoreSeries, SpectralBasis,
};
use crate::dataset_io::{load_labels, load_series, plan_windows, LabelSeries, TailPolicy, TimeSeries, WindowPlan};
use crate::embedding_store::{read_embeddings, reference_embed, write_embeddings, EmbeddingSequence};
use crate::evaluation::{evaluate, EvaluationReport};
use crate::scalar::Scalar;
use crate::similarity::{build_batch_wasm, partition_batches, BatchPartition, SimilarityError, SimilarityMatrix};
use crate::thresholding::{apply_threshold, spot_threshold, ThresholdDecision};

/// Loaded series, labels and embeddings with the plan tying them together.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub series: TimeSeries,
    pub labels: Option<LabelSeries>,
    pub plan: WindowPlan,
    pub embeddings: EmbeddingSequence,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let series = load_series(&cfg.series, cfg.channel, cfg.format)?;
    let labels = match &cfg.labels {
        Some(path) => {
            let labels = load_labels(path)?;
            labels.check_paired(&series)?;
            Some(labels)
        }
        None => None,
    };
    let plan = plan_windows(series.len(), cfg.window, cfg.stride(), TailPolicy::PadRepeatLast)?;
    let embeddings = match &cfg.embeddings {
        EmbeddingSource::File { path } => read_embeddings(path)?,
        EmbeddingSource::Reference { context, dim } => reference_embed(&series, &plan, *context, *dim, cfg.seed)?,
    };
    if embeddings.n() != plan.total_rows() {
        return Err(SimilarityError::RowCountMismatch {
            expected: plan.total_rows(),
            actual: embeddings.n(),
        }
        .into());
    }
    Ok(Inputs {
        series,
        labels,
        plan,
        embeddings,
    })
}

/// Applies `f` to every item on up to `jobs` scoped threads. Results come
/// back in item order whatever the completion order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = jobs.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}

/// Raw (unnormalized) scores of one batch matrix, widened to `f64`.
pub(crate) fn raw_batch_scores<T: Scalar>(s: &SimilarityMatrix<T>, adapter: &AdapterParams) -> Result<Vec<f64>> {
    Ok(match adapter {
        AdapterParams::Spectral(p) => SpectralBasis::compute(s, p.k, p.solver)?.scores::<f64>(p.k)?,
        other => other.score(s)?.into_iter().map(Scalar::widen).collect(),
    })
}

/// Builds each batch's matrix and scores it, `jobs` batches at a time. Only
/// the matrices in flight are held in memory. Matrices of batches listed in
/// `dump` are written to `dump_dir` as `wasm_batch_<i>.them`.
pub fn score_batches(
    inputs: &Inputs,
    partition: &BatchPartition,
    adapter: &AdapterParams,
    jobs: usize,
    dump: (&[usize], Option<&Path>),
) -> Result<Vec<Vec<f64>>> {
    let batches: Vec<usize> = (0..partition.len()).collect();
    parallel_map(&batches, jobs, |_, &b| {
        let s = build_batch_wasm(&inputs.embeddings, &inputs.plan, partition, b)?;
        if let (true, Some(dir)) = (dump.0.contains(&b), dump.1) {
            let path = dir.join(format!("wasm_batch_{b}.them"));
            write_embeddings(&s.to_embedding_dump()?, &path)?;
        }
        raw_batch_scores(&s, adapter)
    })
    .into_iter()
    .collect()
}

/// Normalizes per batch (over real rows only) or globally, and maps rows to
/// timesteps.
pub(crate) fn assemble(
    mut raw: Vec<Vec<f64>>,
    partition: &BatchPartition,
    plan: &WindowPlan,
    scope: NormalizeScope,
    params: AdapterParams,
) -> Result<ScoreSeries<f64>> {
    if scope == NormalizeScope::Batch {
        for (b, scores) in raw.iter_mut().enumerate() {
            let ts = partition.row_timesteps(plan, b);
            *scores = normalize_scores_over(scores, |i| ts.get(i).is_some_and(Option::is_some));
        }
    }
    let mut series = assemble_series_scores(&raw, partition, plan, params)?;
    if scope == NormalizeScope::Global {
        series.scores = normalize_scores(&series.scores);
    }
    Ok(series)
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    pub score_ms: f64,
    pub threshold_ms: Option<f64>,
    pub evaluate_ms: Option<f64>,
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone)]
pub struct ScoreRun {
    pub inputs: Inputs,
    pub partition: BatchPartition,
    pub scores: ScoreSeries<f64>,
    pub timings: Timings,
}

/// Load, embed, build similarity matrices, score, normalize and assemble.
pub fn score_series(cfg: &RunConfig, dump_dir: Option<&Path>) -> Result<ScoreRun> {
    cfg.validate()?;
    let start = Instant::now();
    let inputs = load_inputs(cfg)?;
    let load_ms = millis(start);

    let start = Instant::now();
    let partition = partition_batches(&inputs.plan, cfg.batch_windows)?;
    let raw = score_batches(&inputs, &partition, &cfg.adapter, cfg.jobs, (&cfg.dump_wasm, dump_dir))?;
    let scores = assemble(raw, &partition, &inputs.plan, cfg.normalize_scope, cfg.adapter)?;
    if let Some(t) = scores.scores.iter().position(|v| !v.is_finite()) {
        return Err(PipelineError::Threshold(crate::thresholding::ThresholdError::NonFiniteScore(t)));
    }
    Ok(ScoreRun {
        inputs,
        partition,
        scores,
        timings: Timings {
            load_ms,
            score_ms: millis(start),
            ..Default::default()
        },
    })
}

/// SPOT over the scores themselves, or over a separate calibration score
/// file when one is configured.
pub fn threshold_scores(cfg: &RunConfig, scores: &[f64]) -> Result<ThresholdDecision> {
    Ok(match &cfg.calibration_file {
        Some(path) => spot_threshold(&read_score_column(path)?, cfg.spot_q, cfg.spot_init)?,
        None => spot_threshold(scores, cfg.spot_q, cfg.spot_init)?,
    })
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub run: ScoreRun,
    pub decision: ThresholdDecision,
    pub predictions: LabelSeries,
    /// Present when labels were supplied.
    pub report: Option<EvaluationReport>,
}

pub fn detect(cfg: &RunConfig, dump_dir: Option<&Path>) -> Result<Detection> {
    let mut run = score_series(cfg, dump_dir)?;
    let start = Instant::now();
    let decision = threshold_scores(cfg, &run.scores.scores)?;
    let predictions = apply_threshold(&run.scores.scores, decision.delta);
    run.timings.threshold_ms = Some(millis(start));
    let report = match &run.inputs.labels {
        Some(labels) => {
            let start = Instant::now();
            let report = evaluate(&predictions, labels)?;
            run.timings.evaluate_ms = Some(millis(start));
            Some(report)
        }
        None => None,
    };
    Ok(Detection {
        run,
        decision,
        predictions,
        report,
    })
}
