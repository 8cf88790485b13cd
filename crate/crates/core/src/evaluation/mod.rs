//! Event-level evaluation of binary predictions against labels: affiliation
//! precision, recall and F1, plus summary statistics.

mod affiliation;
mod events;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::LabelSeries;

pub use affiliation::{affiliation_metrics, AffiliationReport, ZoneResult};
pub use events::{to_events, EventList};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("series length must be positive")]
    EmptySeries,
    #[error("event [{start}, {end}) is empty, unsorted, overlapping or outside [0, {len})")]
    InvalidEvent { start: usize, end: usize, len: usize },
    #[error("predictions have {predictions} points, labels {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
}

pub type Result<T> = std::result::Result<T, EvaluationError>;

/// Fraction of anomalous points.
pub fn summarize(labels: &LabelSeries) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.count_ones() as f64 / labels.len() as f64
}

/// Point-wise precision, recall and F1. Diagnostic only.
pub fn pointwise_f1(pred: &LabelSeries, truth: &LabelSeries) -> Result<(f64, f64, f64)> {
    if pred.len() != truth.len() {
        return Err(EvaluationError::LengthMismatch {
            predictions: pred.len(),
            labels: truth.len(),
        });
    }
    let tp = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|&(&p, &t)| p == 1 && t == 1)
        .count() as f64;
    let (np, nt) = (pred.count_ones() as f64, truth.count_ones() as f64);
    let p = if np > 0.0 { tp / np } else { 0.0 };
    let r = if nt > 0.0 { tp / nt } else { 0.0 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok((p, r, f1))
}

/// Affiliation metrics with the label anomaly ratio, as written to
/// `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub anomaly_ratio: f64,
    pub predicted_ratio: f64,
    pub empty_truth: bool,
    pub empty_prediction: bool,
    pub per_zone: Vec<ZoneResult>,
}

pub const CSV_HEADER: &str = "precision,recall,f1,anomaly_ratio,predicted_ratio,empty_truth,empty_prediction";

impl EvaluationReport {
    /// One CSV row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.precision,
            self.recall,
            self.f1,
            self.anomaly_ratio,
            self.predicted_ratio,
            self.empty_truth,
            self.empty_prediction
        )
    }
}

/// Affiliation metrics of binary predictions against binary labels.
pub fn evaluate(pred: &LabelSeries, truth: &LabelSeries) -> Result<EvaluationReport> {
    if pred.len() != truth.len() {
        return Err(EvaluationError::LengthMismatch {
            predictions: pred.len(),
            labels: truth.len(),
        });
    }
    let aff = affiliation_metrics(&to_events(pred), &to_events(truth), truth.len())?;
    Ok(EvaluationReport {
        precision: aff.precision,
        recall: aff.recall,
        f1: aff.f1,
        anomaly_ratio: summarize(truth),
        predicted_ratio: summarize(pred),
        empty_truth: aff.empty_truth,
        empty_prediction: aff.empty_prediction,
        per_zone: aff.per_zone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[u8]) -> LabelSeries {
        LabelSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn anomaly_ratio() {
        assert_eq!(summarize(&labels(&[0, 1, 0, 1])), 0.5);
        assert_eq!(summarize(&labels(&[0, 0, 0])), 0.0);
    }

    #[test]
    fn pointwise_counts() {
        let (p, r, f1) = pointwise_f1(&labels(&[1, 1, 0, 0]), &labels(&[0, 1, 1, 0])).unwrap();
        assert_eq!((p, r, f1), (0.5, 0.5, 0.5));
        assert!(pointwise_f1(&labels(&[1]), &labels(&[1, 0])).is_err());
    }

    #[test]
    fn evaluate_perfect_and_empty_truth() {
        let t = labels(&[0, 1, 1, 0, 0, 1, 0]);
        let r = evaluate(&t, &t).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert!((r.anomaly_ratio - 3.0 / 7.0).abs() < 1e-15);

        let r = evaluate(&labels(&[0, 1, 0]), &labels(&[0, 0, 0])).unwrap();
        assert!(r.empty_truth);
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.csv_row().split(',').count(), CSV_HEADER.split(',').count());
    }
}
