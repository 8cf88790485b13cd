//! Naive reference implementations and fixtures shared by the integration
//! tests. Everything here favours obviousness over speed.
#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use themis_core::adapters::{AdapterParams, SpectralParams, LRD_EPSILON};
use themis_core::pipeline::{EmbeddingSource, RunConfig};
use themis_core::similarity::SimilarityMatrix;
use themis_core::synthetic::{level_shift_series, LevelShiftSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<f64> {
    (0..m * d).map(|_| normal(rng)).collect()
}

/// `|cos|` between every pair of rows, diagonal 1, computed pair by pair.
pub fn naive_abs_cosine(rows: &[f64], m: usize, d: usize) -> Vec<f64> {
    let row = |i: usize| &rows[i * d..(i + 1) * d];
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = if i == j {
                1.0
            } else {
                let dot: f64 = row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum();
                let ni: f64 = row(i).iter().map(|a| a * a).sum::<f64>().sqrt();
                let nj: f64 = row(j).iter().map(|a| a * a).sum::<f64>().sqrt();
                (dot / (ni * nj)).abs().min(1.0)
            };
        }
    }
    out
}

/// Textbook LOF: for each point sort all others by (distance, index) and
/// keep the first `k`.
pub fn naive_lof(dist: &[f64], n: usize, k: usize) -> Vec<f64> {
    let knn: Vec<Vec<usize>> = (0..n)
        .map(|p| {
            let mut others: Vec<usize> = (0..n).filter(|&q| q != p).collect();
            others.sort_by(|&a, &b| dist[p * n + a].total_cmp(&dist[p * n + b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    let k_distance: Vec<f64> = (0..n).map(|p| dist[p * n + knn[p][k - 1]]).collect();
    let lrd: Vec<f64> = (0..n)
        .map(|p| {
            let mean_reach = knn[p].iter().map(|&o| k_distance[o].max(dist[p * n + o])).sum::<f64>() / k as f64;
            1.0 / (mean_reach + LRD_EPSILON)
        })
        .collect();
    (0..n)
        .map(|p| knn[p].iter().map(|&o| lrd[o]).sum::<f64>() / (k as f64 * lrd[p]))
        .collect()
}

/// Inlier cluster with high mutual similarity plus one row that is weakly
/// similar to everything. Returns the matrix and the outlier's index.
pub fn planted_outlier(rng: &mut ChaCha8Rng, m: usize) -> (SimilarityMatrix<f64>, usize) {
    let outlier = rng.gen_range(0..m);
    let mut e = vec![0.0; m * m];
    for i in 0..m {
        e[i * m + i] = 1.0;
        for j in i + 1..m {
            let v = if i == outlier || j == outlier {
                rng.gen_range(0.0..0.3)
            } else {
                rng.gen_range(0.7..0.99)
            };
            e[i * m + j] = v;
            e[j * m + i] = v;
        }
    }
    (SimilarityMatrix::from_dense(m, e).unwrap(), outlier)
}

fn dist_to(x: f64, (a, b): (f64, f64)) -> f64 {
    if x < a {
        a - x
    } else if x > b {
        x - b
    } else {
        0.0
    }
}

/// Monte Carlo affiliation precision and recall for one truth interval on
/// `[0, len)`, which is then the only zone. Predictions are disjoint
/// intervals inside the zone.
pub fn monte_carlo_affiliation(
    rng: &mut ChaCha8Rng,
    len: f64,
    truth: (f64, f64),
    preds: &[(f64, f64)],
    samples: usize,
) -> (f64, f64) {
    let total: f64 = preds.iter().map(|(a, b)| b - a).sum();
    let pick_pred = |rng: &mut ChaCha8Rng| {
        let mut u = rng.gen_range(0.0..total);
        for &(a, b) in preds {
            if u < b - a {
                return a + u;
            }
            u -= b - a;
        }
        preds[preds.len() - 1].1
    };
    let (mut p_hits, mut r_hits) = (0usize, 0usize);
    for _ in 0..samples {
        let x = pick_pred(rng);
        let big_x = rng.gen_range(0.0..len);
        if dist_to(big_x, truth) >= dist_to(x, truth) {
            p_hits += 1;
        }
        let y = rng.gen_range(truth.0..truth.1);
        let big_x = rng.gen_range(0.0..len);
        let to_pred = preds.iter().map(|&p| dist_to(y, p)).fold(f64::INFINITY, f64::min);
        if (big_x - y).abs() >= to_pred {
            r_hits += 1;
        }
    }
    (p_hits as f64 / samples as f64, r_hits as f64 / samples as f64)
}

/// The level-shift benchmark series used by the end-to-end checks.
pub fn benchmark_spec() -> LevelShiftSpec {
    LevelShiftSpec::default()
}

/// Writes the benchmark series and labels to `dir` and returns a detect
/// config: reference embedder 32/64, four windows per batch, spectral k = 5,
/// default SPOT.
pub fn benchmark_config(dir: &Path) -> RunConfig {
    let (series, labels, _) = level_shift_series(&benchmark_spec()).expect("benchmark layout");
    let series_path = dir.join("series.csv");
    let labels_path = dir.join("labels.csv");
    series.write_csv(&series_path).unwrap();
    labels.write_csv(&labels_path).unwrap();
    let mut cfg = RunConfig::new(&series_path);
    cfg.labels = Some(labels_path);
    cfg.embeddings = EmbeddingSource::Reference { context: 32, dim: 64 };
    cfg.batch_windows = 4;
    cfg.adapter = AdapterParams::Spectral(SpectralParams::new(5));
    cfg.out = dir.join("run");
    cfg
}
