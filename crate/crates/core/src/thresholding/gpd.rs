//! Maximum-likelihood Generalized Pareto fit by Grimshaw's reduction.
//!
//! With `x = gamma / sigma`, the likelihood equations reduce to the scalar
//! equation `u(x) v(x) = 1` where
//! `u(x) = mean(1 / (1 + x y_i))` and `v(x) = 1 + mean(ln(1 + x y_i))`,
//! after which `gamma = v(x) - 1` and `sigma = gamma / x`. Roots are searched
//! on `(-1 / y_max, 0)` and on `(0, 2 (mean - min) / min^2]`; every candidate,
//! and the exponential model, is compared by log-likelihood.

use serde::{Deserialize, Serialize};

use super::{Result, ThresholdError};
use crate::scalar::Scalar;

pub const MIN_PEAKS: usize = 8;
const ROOT_TOL: f64 = 1e-10;
const MAX_ROOT_ITERATIONS: usize = 200;
const GRID_POINTS: usize = 64;
const TRIVIAL_ROOT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit<T> {
    pub gamma: T,
    pub sigma: T,
    pub peak_count: usize,
    /// Whether Grimshaw's equation produced the returned parameters (as
    /// opposed to the exponential model).
    pub from_root: bool,
}

/// GPD log-likelihood of positive excesses.
pub fn gpd_log_likelihood(peaks: &[f64], gamma: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = peaks.len() as f64;
    if gamma == 0.0 {
        return -n * sigma.ln() - peaks.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &y in peaks {
        let z = 1.0 + gamma * y / sigma;
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += z.ln();
    }
    -n * sigma.ln() - (1.0 + 1.0 / gamma) * acc
}

struct Grimshaw<'a> {
    peaks: &'a [f64],
}

impl Grimshaw<'_> {
    fn uv(&self, x: f64) -> (f64, f64) {
        let n = self.peaks.len() as f64;
        let (mut u, mut v) = (0.0, 0.0);
        for &y in self.peaks {
            let s = 1.0 + x * y;
            u += 1.0 / s;
            v += s.ln();
        }
        (u / n, 1.0 + v / n)
    }

    fn w(&self, x: f64) -> f64 {
        let (u, v) = self.uv(x);
        u * v - 1.0
    }

    fn params(&self, x: f64) -> (f64, f64) {
        let gamma = self.uv(x).1 - 1.0;
        (gamma, gamma / x)
    }

    /// Brent's method on a bracket with a sign change.
    fn brent(&self, mut a: f64, mut b: f64) -> Option<f64> {
        let (mut fa, mut fb) = (self.w(a), self.w(b));
        if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
            return None;
        }
        let (mut c, mut fc) = (a, fa);
        let mut d = b - a;
        let mut e = d;
        for _ in 0..MAX_ROOT_ITERATIONS {
            if fb * fc > 0.0 {
                c = a;
                fc = fa;
                d = b - a;
                e = d;
            }
            if fc.abs() < fb.abs() {
                a = b;
                b = c;
                c = a;
                fa = fb;
                fb = fc;
                fc = fa;
            }
            let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * ROOT_TOL;
            let m = 0.5 * (c - b);
            if m.abs() <= tol || fb == 0.0 {
                return Some(b);
            }
            if e.abs() >= tol && fa.abs() > fb.abs() {
                let s = fb / fa;
                let (mut p, mut q);
                if a == c {
                    p = 2.0 * m * s;
                    q = 1.0 - s;
                } else {
                    let qa = fa / fc;
                    let r = fb / fc;
                    p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                    q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
                }
                if p > 0.0 {
                    q = -q;
                } else {
                    p = -p;
                }
                if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                    e = d;
                    d = p / q;
                } else {
                    d = m;
                    e = d;
                }
            } else {
                d = m;
                e = d;
            }
            a = b;
            fa = fb;
            b += if d.abs() > tol { d } else { tol.copysign(m) };
            fb = self.w(b);
            if !fb.is_finite() {
                return None;
            }
        }
        Some(b)
    }

    /// Roots of `w` bracketed by consecutive sign changes over `grid`.
    fn roots_on(&self, grid: &[f64], out: &mut Vec<f64>) {
        let values: Vec<f64> = grid.iter().map(|&x| self.w(x)).collect();
        for (i, (&x, &wx)) in grid.iter().zip(&values).enumerate() {
            if wx == 0.0 {
                out.push(x);
                continue;
            }
            if i == 0 {
                continue;
            }
            let (px, pw) = (grid[i - 1], values[i - 1]);
            if pw.is_finite() && wx.is_finite() && pw * wx < 0.0 {
                if let Some(r) = self.brent(px, x) {
                    out.push(r);
                }
            }
        }
    }
}

/// Ascending grid on `[lo, hi]` (same sign, `|lo|, |hi| > 0`): uniform points
/// merged with points geometric in the distance to zero, so brackets near
/// zero and across many decades are both resolved.
fn search_grid(lo: f64, hi: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / GRID_POINTS as f64)
        .collect();
    let (near, far) = if hi <= 0.0 { (hi.abs(), lo.abs()) } else { (lo, hi) };
    let sign = if hi <= 0.0 { -1.0 } else { 1.0 };
    let ratio = (far / near).ln();
    grid.extend((0..=GRID_POINTS).map(|i| sign * near * (ratio * i as f64 / GRID_POINTS as f64).exp()));
    grid.retain(|x| x.is_finite() && *x >= lo && *x <= hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Fits a GPD to positive excesses over a threshold.
pub fn fit_gpd<T: Scalar>(peaks: &[T]) -> Result<GpdFit<T>> {
    if peaks.len() < MIN_PEAKS {
        return Err(ThresholdError::TooFewPeaks {
            found: peaks.len(),
            required: MIN_PEAKS,
        });
    }
    let ys: Vec<f64> = peaks.iter().map(|p| p.widen()).collect();
    if let Some(bad) = ys.iter().find(|y| !(y.is_finite() && **y > 0.0)) {
        return Err(ThresholdError::InvalidPeak(*bad));
    }
    let n = ys.len() as f64;
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(0.0, f64::max);
    let y_mean = ys.iter().sum::<f64>() / n;

    let mut best = (0.0, y_mean, gpd_log_likelihood(&ys, 0.0, y_mean), false);

    let solver = Grimshaw { peaks: &ys };
    let mut roots = Vec::new();
    let a = -1.0 / y_max;
    let eps = (1e-8f64).min(0.5 * a.abs() / n);
    solver.roots_on(&search_grid(a + eps, -eps), &mut roots);
    let spread = y_mean - y_min;
    if spread > 0.0 {
        let hi = 2.0 * spread / (y_min * y_min);
        if hi > eps {
            solver.roots_on(&search_grid(eps, hi), &mut roots);
        }
    }
    for x in roots {
        // x = 0 always solves the equation and is the exponential model
        if (x * y_max).abs() < TRIVIAL_ROOT {
            continue;
        }
        let (gamma, sigma) = solver.params(x);
        let ll = gpd_log_likelihood(&ys, gamma, sigma);
        if sigma > 0.0 && ll.is_finite() && ll > best.2 {
            best = (gamma, sigma, ll, true);
        }
    }
    Ok(GpdFit {
        gamma: T::narrow(best.0),
        sigma: T::narrow(best.1),
        peak_count: ys.len(),
        from_root: best.3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gpd_sample(n: usize, gamma: f64, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                if gamma == 0.0 {
                    -sigma * (1.0 - u).ln()
                } else {
                    sigma / gamma * ((1.0 - u).powf(-gamma) - 1.0)
                }
            })
            .filter(|y| *y > 0.0)
            .collect()
    }

    #[test]
    fn equal_peaks_fall_back_to_exponential() {
        let fit = fit_gpd(&[0.3f64; 20]).unwrap();
        assert_eq!(fit.gamma, 0.0);
        assert!((fit.sigma - 0.3).abs() < 1e-15);
        assert!(!fit.from_root);
    }

    #[test]
    fn too_few_and_invalid_peaks() {
        assert!(matches!(fit_gpd(&[1.0f64; 7]), Err(ThresholdError::TooFewPeaks { found: 7, .. })));
        let mut p = vec![1.0f64; 10];
        p[3] = 0.0;
        assert!(matches!(fit_gpd(&p), Err(ThresholdError::InvalidPeak(_))));
    }

    #[test]
    fn recovers_heavy_tail() {
        let ys = gpd_sample(10_000, 0.2, 1.0, 42);
        let fit = fit_gpd(&ys).unwrap();
        assert!((0.1..=0.3).contains(&fit.gamma), "gamma {}", fit.gamma);
        assert!((0.9..=1.1).contains(&fit.sigma), "sigma {}", fit.sigma);
    }

    #[test]
    fn recovers_light_tail() {
        let ys = gpd_sample(10_000, -0.2, 1.0, 5);
        let fit = fit_gpd(&ys).unwrap();
        assert!((-0.3..=-0.1).contains(&fit.gamma), "gamma {}", fit.gamma);
    }

    #[test]
    fn exponential_shape_near_zero() {
        let ys = gpd_sample(10_000, 0.0, 1.0, 7);
        let fit = fit_gpd(&ys).unwrap();
        assert!(fit.gamma.abs() <= 0.05, "gamma {}", fit.gamma);
    }

    #[test]
    fn likelihood_not_below_exponential() {
        for seed in 0..20 {
            let ys = gpd_sample(300, 0.1 * (seed % 5) as f64 - 0.2, 0.5, seed);
            let fit = fit_gpd(&ys).unwrap();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let ll = gpd_log_likelihood(&ys, fit.gamma, fit.sigma);
            assert!(ll >= gpd_log_likelihood(&ys, 0.0, mean) - 1e-9);
        }
    }

    #[test]
    fn root_satisfies_likelihood_equation() {
        // at an interior optimum the score equations vanish; check d ll / d sigma
        let ys = gpd_sample(5_000, 0.3, 2.0, 11);
        let fit = fit_gpd(&ys).unwrap();
        assert!(fit.from_root);
        let h = 1e-6;
        let dl = (gpd_log_likelihood(&ys, fit.gamma, fit.sigma + h) - gpd_log_likelihood(&ys, fit.gamma, fit.sigma - h))
            / (2.0 * h);
        let dg = (gpd_log_likelihood(&ys, fit.gamma + h, fit.sigma) - gpd_log_likelihood(&ys, fit.gamma - h, fit.sigma))
            / (2.0 * h);
        assert!(dl.abs() < 1e-2 && dg.abs() < 1e-2, "{dl} {dg}");
    }
}
