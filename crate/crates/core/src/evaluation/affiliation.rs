//! Affiliation metrics (Huet, Navarro and Rossi, KDD 2022).
//!
//! The timeline `[0, T)` is cut into one zone per truth event, with borders
//! halfway between consecutive events. Inside a zone `E` with truth event
//! `J`, events are continuous intervals and
//!
//! - a predicted point `x` scores `P(dist(X, J) >= dist(x, J))`,
//! - a truth point `y` scores `P(|X - y| >= dist(y, predictions))`,
//!
//! for `X` uniform on `E`. Both integrands are piecewise linear, so the zone
//! averages are integrated exactly segment by segment.

use serde::{Deserialize, Serialize};

use super::{EventList, EvaluationError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneResult {
    pub zone: (f64, f64),
    pub truth: (usize, usize),
    /// `None` when no prediction falls in the zone.
    pub precision: Option<f64>,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffiliationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_zone: Vec<ZoneResult>,
    /// No truth events: recall is undefined and all three metrics are 0.
    pub empty_truth: bool,
    /// No predicted events: precision is undefined and reported as 0.
    pub empty_prediction: bool,
}

/// `int_a^b max(0, g)` for `g` linear with `g(a) = ga`, `g(b) = gb`.
fn positive_part_integral(ga: f64, gb: f64, width: f64) -> f64 {
    if ga >= 0.0 && gb >= 0.0 {
        0.5 * (ga + gb) * width
    } else if ga <= 0.0 && gb <= 0.0 {
        0.0
    } else {
        let p = ga.max(gb);
        0.5 * p * p / (ga - gb).abs() * width
    }
}

struct Zone {
    lo: f64,
    hi: f64,
    j0: f64,
    j1: f64,
}

impl Zone {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Integral of the precision survival over `[a, b]`, which lies on one
    /// side of the truth event or inside it.
    fn precision_piece(&self, a: f64, b: f64) -> f64 {
        if a >= self.j0 && b <= self.j1 {
            return b - a;
        }
        let dist = |x: f64| if b <= self.j0 { self.j0 - x } else { x - self.j1 };
        let below = |x: f64| self.j0 - dist(x) - self.lo;
        let above = |x: f64| self.hi - self.j1 - dist(x);
        (positive_part_integral(below(a), below(b), b - a) + positive_part_integral(above(a), above(b), b - a))
            / self.width()
    }

    fn precision(&self, preds: &[(f64, f64)]) -> Option<f64> {
        if preds.is_empty() {
            return None;
        }
        let (mut integral, mut length) = (0.0, 0.0);
        for &(u, v) in preds {
            let mut cuts = vec![u];
            cuts.extend([self.j0, self.j1].into_iter().filter(|&c| c > u && c < v));
            cuts.push(v);
            for w in cuts.windows(2) {
                integral += self.precision_piece(w[0], w[1]);
            }
            length += v - u;
        }
        Some(integral / length)
    }

    fn recall(&self, preds: &[(f64, f64)]) -> f64 {
        if preds.is_empty() {
            return 0.0;
        }
        let mut cuts = vec![self.j0, self.j1];
        for (i, &(u, v)) in preds.iter().enumerate() {
            cuts.extend([u, v]);
            if let Some(&(next, _)) = preds.get(i + 1) {
                cuts.push(0.5 * (v + next));
            }
        }
        cuts.retain(|&c| c >= self.j0 && c <= self.j1);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut integral = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            if preds.iter().any(|&(u, v)| mid >= u && mid <= v) {
                integral += b - a;
                continue;
            }
            // nearest prediction endpoint is fixed between cuts
            let anchor = preds
                .iter()
                .flat_map(|&(u, v)| [u, v])
                .min_by(|p, q| (p - mid).abs().total_cmp(&(q - mid).abs()))
                .unwrap_or(mid);
            let dist = |y: f64| (y - anchor).abs();
            let left = |y: f64| y - dist(y) - self.lo;
            let right = |y: f64| self.hi - y - dist(y);
            integral += (positive_part_integral(left(a), left(b), b - a)
                + positive_part_integral(right(a), right(b), b - a))
                / self.width();
        }
        integral / (self.j1 - self.j0)
    }
}

/// Affiliation precision, recall and F1 of `pred` against `truth` over a
/// series of length `len`.
pub fn affiliation_metrics(pred: &EventList, truth: &EventList, len: usize) -> Result<AffiliationReport> {
    if len == 0 {
        return Err(EvaluationError::EmptySeries);
    }
    for list in [pred, truth] {
        if let Some(e) = list.events().iter().find(|e| e.end > len) {
            return Err(EvaluationError::InvalidEvent {
                start: e.start,
                end: e.end,
                len,
            });
        }
    }
    let empty_prediction = pred.is_empty();
    if truth.is_empty() {
        return Ok(AffiliationReport {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            per_zone: Vec::new(),
            empty_truth: true,
            empty_prediction,
        });
    }

    let gt = truth.events();
    let mut per_zone = Vec::with_capacity(gt.len());
    for (i, j) in gt.iter().enumerate() {
        let lo = if i == 0 { 0.0 } else { 0.5 * (gt[i - 1].end + j.start) as f64 };
        let hi = match gt.get(i + 1) {
            Some(next) => 0.5 * (j.end + next.start) as f64,
            None => len as f64,
        };
        let zone = Zone {
            lo,
            hi,
            j0: j.start as f64,
            j1: j.end as f64,
        };
        let preds: Vec<(f64, f64)> = pred
            .events()
            .iter()
            .map(|p| ((p.start as f64).max(lo), (p.end as f64).min(hi)))
            .filter(|(u, v)| v > u)
            .collect();
        per_zone.push(ZoneResult {
            zone: (lo, hi),
            truth: (j.start, j.end),
            precision: zone.precision(&preds),
            recall: zone.recall(&preds),
        });
    }

    let precisions: Vec<f64> = per_zone.iter().filter_map(|z| z.precision).collect();
    let precision = if precisions.is_empty() {
        0.0
    } else {
        precisions.iter().sum::<f64>() / precisions.len() as f64
    };
    let recall = per_zone.iter().map(|z| z.recall).sum::<f64>() / per_zone.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(AffiliationReport {
        precision,
        recall,
        f1,
        per_zone,
        empty_truth: false,
        empty_prediction,
    })
}
