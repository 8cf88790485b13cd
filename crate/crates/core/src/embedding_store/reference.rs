//! Deterministic stand-in embedder: a z-normalized trailing context of `w`
//! observations projected to `d` dimensions by a fixed Gaussian matrix.
//!
//! The projection entries come from a counter-indexed SplitMix64 stream so
//! any implementation can reproduce them from the seed alone:
//!
//! * `u64` draw `i` is `mix(seed + (i + 1) * 0x9E3779B97F4A7C15)` (wrapping),
//!   where `mix(z)` is `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
//!   z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! * uniform draw `i` is `((draw_i >> 11) + 1) * 2^-53`, in `(0, 1]`.
//! * entry `(r, c)` of the `w x d` matrix has flat index `j = r * d + c` and
//!   value `sqrt(-2 ln u_{2j}) * cos(2 pi u_{2j+1}) / sqrt(w)`.

use super::format::{EmbeddingError, EmbeddingSequence, Result};
use crate::dataset_io::{TimeSeries, WindowPlan};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Contexts whose standard deviation falls below this embed to zero.
pub const STD_FLOOR: f64 = 1e-8;

/// The SplitMix64 output at position `index` of the stream for `seed`.
pub fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_open_closed(seed: u64, index: u64) -> f64 {
    ((splitmix64(seed, index) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw `j` via Box-Muller over uniforms `2j` and `2j + 1`.
pub fn standard_normal(seed: u64, j: u64) -> f64 {
    let u1 = unit_open_closed(seed, 2 * j);
    let u2 = unit_open_closed(seed, 2 * j + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    context: usize,
    dim: usize,
    seed: u64,
    // context x dim, row-major
    projection: Vec<f64>,
}

impl ReferenceEmbedder {
    pub fn new(context: usize, dim: usize, seed: u64) -> Result<Self> {
        if context == 0 || dim == 0 {
            return Err(EmbeddingError::Shape(format!(
                "reference embedder needs w >= 1 and d >= 1 (got w={context}, d={dim})"
            )));
        }
        let scale = 1.0 / (context as f64).sqrt();
        let projection = (0..context * dim)
            .map(|j| standard_normal(seed, j as u64) * scale)
            .collect();
        Ok(Self {
            context,
            dim,
            seed,
            projection,
        })
    }

    pub fn source_tag(&self) -> String {
        format!("reference-rp w={} d={} seed={}", self.context, self.dim, self.seed)
    }

    /// Embeds the context ending at `position` of the padded series.
    fn embed_position(&self, values: &[f64], position: usize, ctx: &mut [f64], out: &mut [f32]) {
        let last = values.len() - 1;
        let w = self.context;
        for (r, slot) in ctx.iter_mut().enumerate() {
            // position - w + 1 + r, clamped to the series
            let idx = (position + r + 1).saturating_sub(w).min(last);
            *slot = values[idx];
        }
        let mean = ctx.iter().sum::<f64>() / w as f64;
        let var = ctx.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
        let std = var.sqrt();
        if std < STD_FLOOR {
            out.fill(0.0);
            return;
        }
        for v in ctx.iter_mut() {
            *v = (*v - mean) / std;
        }
        let mut acc = vec![0.0f64; self.dim];
        for (r, &c) in ctx.iter().enumerate() {
            let row = &self.projection[r * self.dim..(r + 1) * self.dim];
            for (a, &p) in acc.iter_mut().zip(row) {
                *a += c * p;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a as f32;
        }
    }

    /// One embedding per row of `plan`, pad rows included.
    pub fn embed(&self, series: &TimeSeries, plan: &WindowPlan) -> Result<EmbeddingSequence> {
        let n = plan.total_rows();
        let mut vectors = vec![0.0f32; n * self.dim];
        let mut ctx = vec![0.0f64; self.context];
        let mut row = 0;
        for w in 0..plan.num_windows() {
            for position in plan.window_positions(w) {
                let out = &mut vectors[row * self.dim..(row + 1) * self.dim];
                self.embed_position(series.values(), position, &mut ctx, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(EmbeddingError::Overflow { row });
                }
                row += 1;
            }
        }
        EmbeddingSequence::new(vectors, n, self.dim, self.source_tag())
    }
}

/// Convenience wrapper around [`ReferenceEmbedder`].
pub fn reference_embed(
    series: &TimeSeries,
    plan: &WindowPlan,
    context: usize,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingSequence> {
    ReferenceEmbedder::new(context, dim, seed)?.embed(series, plan)
}
