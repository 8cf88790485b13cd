//! Seeded synthetic series with injected level-shift anomalies, for tests,
//! demos and benchmarks. Every draw comes from the same counter-indexed
//! SplitMix64 stream as the reference embedder, so a seed fixes the series
//! on every platform.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{LabelSeries, TimeSeries};
use crate::embedding_store::{splitmix64, standard_normal};

// separate the noise stream from the layout stream
const LAYOUT_STREAM: u64 = 0x5EED_1A70_0000_0001;
const MAX_LAYOUT_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelShiftSpec {
    pub len: usize,
    pub events: usize,
    /// Inclusive range of event lengths.
    pub min_event: usize,
    pub max_event: usize,
    /// Added to every point of an event; its sign alternates from event to
    /// event.
    pub shift: f64,
    /// Base signal: `amplitude * sin(2 pi t / period)` plus Gaussian noise.
    pub amplitude: f64,
    pub period: f64,
    pub noise: f64,
    /// Minimum number of normal points between events and at either end.
    pub min_gap: usize,
    /// When set, every block `[i * b, (i + 1) * b)` holds at least one whole
    /// event (used to give each similarity batch an anomaly).
    pub cover_blocks: Option<usize>,
    pub seed: u64,
}

impl Default for LevelShiftSpec {
    fn default() -> Self {
        Self {
            len: 8192,
            events: 5,
            min_event: 32,
            max_event: 128,
            shift: 2.0,
            amplitude: 1.0,
            period: 24.0,
            noise: 0.02,
            min_gap: 256,
            cover_blocks: Some(2048),
            seed: 0,
        }
    }
}

struct Draws {
    seed: u64,
    next: u64,
}

impl Draws {
    fn below(&mut self, n: usize) -> usize {
        let v = splitmix64(self.seed, self.next);
        self.next += 1;
        // multiply-shift keeps the draw unbiased enough for layout purposes
        ((v as u128 * n as u128) >> 64) as usize
    }
}

/// Event ranges, sorted and separated by at least `min_gap` points.
fn layout(spec: &LevelShiftSpec) -> Option<Vec<(usize, usize)>> {
    let mut draws = Draws {
        seed: spec.seed ^ LAYOUT_STREAM,
        next: 0,
    };
    let span = spec.max_event.checked_sub(spec.min_event)? + 1;
    for _ in 0..MAX_LAYOUT_ATTEMPTS {
        let mut events: Vec<(usize, usize)> = (0..spec.events)
            .map(|_| {
                let len = spec.min_event + draws.below(span);
                let room = spec.len.saturating_sub(2 * spec.min_gap + len).max(1);
                let start = spec.min_gap + draws.below(room);
                (start, start + len)
            })
            .collect();
        events.sort_unstable();
        let separated = events.windows(2).all(|w| w[1].0 >= w[0].1 + spec.min_gap);
        let inside = events.iter().all(|&(_, e)| e + spec.min_gap <= spec.len);
        let covered = spec.cover_blocks.map_or(true, |b| {
            (0..spec.len.div_ceil(b)).all(|i| events.iter().any(|&(s, e)| s >= i * b && e <= (i + 1) * b))
        });
        if separated && inside && covered {
            return Some(events);
        }
    }
    None
}

/// Generates the series and its labels. Returns `None` when no layout
/// satisfies the spacing constraints.
pub fn level_shift_series(spec: &LevelShiftSpec) -> Option<(TimeSeries, LabelSeries, Vec<(usize, usize)>)> {
    if spec.len == 0 || spec.period <= 0.0 || spec.min_event == 0 {
        return None;
    }
    let events = layout(spec)?;
    let mut values: Vec<f64> = (0..spec.len)
        .map(|t| spec.amplitude * (TAU * t as f64 / spec.period).sin() + spec.noise * standard_normal(spec.seed, t as u64))
        .collect();
    let mut labels = vec![0u8; spec.len];
    for (i, &(s, e)) in events.iter().enumerate() {
        let shift = if i % 2 == 0 { spec.shift } else { -spec.shift };
        for t in s..e {
            values[t] += shift;
            labels[t] = 1;
        }
    }
    let series = TimeSeries::new(format!("level-shift-{}", spec.seed), values).ok()?;
    let labels = LabelSeries::new(labels).ok()?;
    Some((series, labels, events))
}
