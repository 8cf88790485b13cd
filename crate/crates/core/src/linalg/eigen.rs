//! Dense symmetric eigensolvers.
//!
//! Both solvers start from a Householder reduction to tridiagonal form.
//! [`SymmetricEigen`] then runs implicit QL with Wilkinson shifts while
//! accumulating every eigenvector. [`top_eigenpairs`] computes all
//! eigenvalues the same way but only the requested eigenvectors, by inverse
//! iteration on the tridiagonal matrix followed by back-transformation, which
//! keeps the cost of a large batch dominated by the reduction itself.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_store::splitmix64;

const MAX_QL_ITERATIONS: usize = 60;
const INVERSE_ITERATIONS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("QL iteration did not converge for eigenvalue {0}")]
    NonConvergence(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("expected {expected} entries for an n x n matrix, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("requested {requested} eigenpairs of a {size}x{size} matrix")]
    TooManyPairs { requested: usize, size: usize },
}

pub type Result<T> = std::result::Result<T, EigenError>;

/// Which solver produces the retained eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSolver {
    /// Full decomposition, every eigenvector accumulated.
    Full,
    /// All eigenvalues, eigenvectors only for the retained pairs.
    Partial,
    /// `Full` up to [`AUTO_FULL_LIMIT`] rows, `Partial` above.
    #[default]
    Auto,
}

pub const AUTO_FULL_LIMIT: usize = 512;

/// Tridiagonal form `Q^T A Q` with the Householder vectors defining `Q`.
struct Tridiagonal<T> {
    diag: Vec<T>,
    /// `off[i]` is entry `(i + 1, i)`.
    off: Vec<T>,
    /// Reflector `k` acts on indices `k + 1..n`.
    reflectors: Vec<Vec<T>>,
    taus: Vec<T>,
}

/// Dot product with four independent accumulators.
#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let tail = ra.iter().zip(rb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Householder reflector `I - tau v v^T` mapping `x` onto `alpha e_1`.
fn reflector<T: Float>(x: &[T]) -> (Vec<T>, T, T) {
    let mut v = x.to_vec();
    let x0 = v[0];
    let tail = dot(&v[1..], &v[1..]);
    if tail == T::zero() {
        return (v, T::zero(), x0);
    }
    let norm = (x0 * x0 + tail).sqrt();
    let alpha = if x0 >= T::zero() { -norm } else { norm };
    v[0] = x0 - alpha;
    let tau = (T::one() + T::one()) / (v[0] * v[0] + tail);
    (v, tau, alpha)
}

/// `A v` over rows/columns `start..n` of a symmetric matrix of which only
/// the lower triangle is read.
fn lower_matvec<T: Float>(a: &[T], n: usize, start: usize, v: &[T]) -> Vec<T> {
    let mut p = vec![T::zero(); n - start];
    for i in 0..n - start {
        let row = &a[(start + i) * n + start..(start + i) * n + start + i + 1];
        let vi = v[i];
        let (below, diag) = row.split_at(i);
        for (pj, &r) in p[..i].iter_mut().zip(below) {
            *pj = *pj + r * vi;
        }
        p[i] = p[i] + dot(below, &v[..i]) + diag[0] * vi;
    }
    p
}

fn tridiagonalize<T: Float>(mut a: Vec<T>, n: usize) -> Tridiagonal<T> {
    let mut diag = vec![T::zero(); n];
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    let steps = n.saturating_sub(2);
    let mut reflectors = Vec::with_capacity(steps);
    let mut taus = Vec::with_capacity(steps);
    let two = T::one() + T::one();
    let column = |a: &[T], k: usize| -> Vec<T> { (k + 1..n).map(|i| a[i * n + k]).collect() };

    // Only the lower triangle is read or written. Each step's rank-2
    // update is fused with the next step's matrix-vector product so the
    // trailing block is streamed once per step.
    let mut next = (steps > 0).then(|| {
        let (v, tau, alpha) = reflector(&column(&a, 0));
        let p = if tau == T::zero() { Vec::new() } else { lower_matvec(&a, n, 1, &v) };
        (v, tau, alpha, p)
    });
    for k in 0..steps {
        let (v, tau, alpha, p) = next.take().expect("reflector prepared");
        diag[k] = a[k * n + k];
        off[k] = alpha;
        let len = n - k - 1;
        let w: Vec<T> = if tau == T::zero() {
            Vec::new()
        } else {
            let p: Vec<T> = p.iter().map(|&x| tau * x).collect();
            let half_k = tau / two * dot(&p, &v);
            p.iter().zip(&v).map(|(&pi, &vi)| pi - half_k * vi).collect()
        };
        let updated = |a: &[T], i: usize, j: usize| -> T {
            let r = a[(k + 1 + i) * n + k + 1 + j];
            if w.is_empty() {
                r
            } else {
                r - (v[i] * w[j] + w[i] * v[j])
            }
        };

        // reflector for step k + 1 from the updated column k + 1
        let has_next = k + 1 < steps;
        let (nv, ntau, nalpha) = if has_next {
            let col: Vec<T> = (1..len).map(|i| updated(&a, i, 0)).collect();
            reflector(&col)
        } else {
            (Vec::new(), T::zero(), T::zero())
        };
        let accumulate = has_next && ntau != T::zero();
        let mut np = vec![T::zero(); if accumulate { len - 1 } else { 0 }];

        for i in 0..len {
            let row = &mut a[(k + 1 + i) * n + k + 1..(k + 1 + i) * n + k + 2 + i];
            if !w.is_empty() {
                let (vi, wi) = (v[i], w[i]);
                for ((r, &vj), &wj) in row.iter_mut().zip(&v[..=i]).zip(&w[..=i]) {
                    *r = *r - (vi * wj + wi * vj);
                }
            }
            if accumulate && i >= 1 {
                // row i of the next block, columns 1..=i
                let ii = i - 1;
                let seg = &row[1..];
                let vi = nv[ii];
                let (below, d) = seg.split_at(ii);
                for (pj, &r) in np[..ii].iter_mut().zip(below) {
                    *pj = *pj + r * vi;
                }
                np[ii] = np[ii] + dot(below, &nv[..ii]) + d[0] * vi;
            }
        }
        reflectors.push(v);
        taus.push(tau);
        if has_next {
            next = Some((nv, ntau, nalpha, np));
        }
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2) * n + n - 2];
        off[n - 2] = a[(n - 1) * n + n - 2];
    }
    if n >= 1 {
        diag[n - 1] = a[n * n - 1];
    }
    Tridiagonal {
        diag,
        off,
        reflectors,
        taus,
    }
}

impl<T: Float> Tridiagonal<T> {
    /// Applies `Q` to a vector expressed in the tridiagonal basis.
    fn back_transform(&self, y: &mut [T]) {
        for k in (0..self.reflectors.len()).rev() {
            let tau = self.taus[k];
            if tau == T::zero() {
                continue;
            }
            let v = &self.reflectors[k];
            let seg = &mut y[k + 1..];
            let s = tau * v.iter().zip(seg.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            for (yi, &vi) in seg.iter_mut().zip(v) {
                *yi = *yi - s * vi;
            }
        }
    }

    /// `Q^T` as a row-major matrix: row `i` is column `i` of `Q`.
    fn q_transposed(&self, n: usize) -> Vec<T> {
        // Q = H_0 H_1 ... accumulated right to left; rows k+1.. only ever
        // mix columns k+1.. at step k.
        let mut q = vec![T::zero(); n * n];
        for i in 0..n {
            q[i * n + i] = T::one();
        }
        let mut w = vec![T::zero(); n];
        for k in (0..self.reflectors.len()).rev() {
            let tau = self.taus[k];
            if tau == T::zero() {
                continue;
            }
            let v = &self.reflectors[k];
            let cols = k + 1..n;
            let w = &mut w[cols.clone()];
            w.iter_mut().for_each(|x| *x = T::zero());
            for (i, &vi) in v.iter().enumerate() {
                let row = &q[(k + 1 + i) * n + cols.start..(k + 2 + i) * n];
                for (wj, &r) in w.iter_mut().zip(row) {
                    *wj = *wj + vi * r;
                }
            }
            for (i, &vi) in v.iter().enumerate() {
                let scale = tau * vi;
                let row = &mut q[(k + 1 + i) * n + cols.start..(k + 2 + i) * n];
                for (r, &wj) in row.iter_mut().zip(w.iter()) {
                    *r = *r - scale * wj;
                }
            }
        }
        let mut qt = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                qt[j * n + i] = q[i * n + j];
            }
        }
        qt
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. `e[i]` holds entry
/// `(i + 1, i)` and `e[n - 1]` must be zero. When `vectors` is given, its
/// rows (length `n` each) are rotated alongside.
fn tridiagonal_ql<T: Float>(d: &mut [T], e: &mut [T], mut vectors: Option<&mut [T]>) -> Result<()> {
    let n = d.len();
    let eps = T::epsilon();
    let two = T::one() + T::one();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd || e[m].abs() <= T::min_positive_value() {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(EigenError::NonConvergence(l));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let signed_r = if g >= T::zero() { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + signed_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = vectors.as_deref_mut() {
                    let (head, tail) = z.split_at_mut((i + 1) * n);
                    let zi = &mut head[i * n..];
                    let zi1 = &mut tail[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f = *b;
                        *b = s * *a + c * f;
                        *a = c * *a - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

fn check_input<T: Float>(matrix: &[T], n: usize) -> Result<()> {
    if matrix.len() != n * n {
        return Err(EigenError::Shape {
            expected: n * n,
            actual: matrix.len(),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    Ok(())
}

/// Full decomposition `A = Q diag(values) Q^T` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Row `i` is the unit eigenvector for `values[i]`.
    vectors: Vec<T>,
    n: usize,
}

impl<T: Float> SymmetricEigen<T> {
    /// Decomposes a symmetric row-major `n x n` matrix. Only the lower
    /// triangle's symmetry is assumed, not checked.
    pub fn new(matrix: &[T], n: usize) -> Result<Self> {
        check_input(matrix, n)?;
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: Vec::new(),
                n,
            });
        }
        let tri = tridiagonalize(matrix.to_vec(), n);
        let mut z = tri.q_transposed(n);
        let mut d = tri.diag;
        let mut e = tri.off;
        e.push(T::zero());
        tridiagonal_ql(&mut d, &mut e, Some(&mut z))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
        let values = order.iter().map(|&i| d[i]).collect();
        let mut vectors = Vec::with_capacity(n * n);
        for &i in &order {
            vectors.extend_from_slice(&z[i * n..(i + 1) * n]);
        }
        Ok(Self { values, vectors, n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn vector(&self, i: usize) -> &[T] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    /// `Q diag(values) Q^T`, row-major.
    pub fn reconstruct(&self) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for (k, &lambda) in self.values.iter().enumerate() {
            let q = self.vector(k);
            for i in 0..n {
                let s = lambda * q[i];
                let row = &mut out[i * n..(i + 1) * n];
                for (o, &qj) in row.iter_mut().zip(q) {
                    *o = *o + s * qj;
                }
            }
        }
        out
    }

    /// The `k` pairs of largest eigenvalue, largest first.
    pub fn top(&self, k: usize) -> TopEigen<T> {
        let k = k.min(self.n);
        let idx: Vec<usize> = (0..self.n).rev().take(k).collect();
        TopEigen {
            values: idx.iter().map(|&i| self.values[i]).collect(),
            vectors: idx.iter().flat_map(|&i| self.vector(i).iter().copied()).collect(),
            n: self.n,
        }
    }
}

/// The largest eigenpairs of a symmetric matrix, largest first.
#[derive(Debug, Clone)]
pub struct TopEigen<T> {
    pub values: Vec<T>,
    vectors: Vec<T>,
    n: usize,
}

impl<T: Float> TopEigen<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn vector(&self, i: usize) -> &[T] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }
}

/// Solves `(T - shift I) x = rhs` for a symmetric tridiagonal `T` by
/// Gaussian elimination with partial pivoting. Tiny pivots are replaced by
/// `floor` so the solve stays defined at an exact eigenvalue.
fn shifted_tridiagonal_solve<T: Float>(diag: &[T], off: &[T], shift: T, floor: T, rhs: &mut [T]) {
    let n = diag.len();
    let mut u0: Vec<T> = diag.iter().map(|&d| d - shift).collect();
    let mut u1: Vec<T> = off.to_vec();
    u1.push(T::zero());
    let mut u2 = vec![T::zero(); n];
    let mut mult = vec![T::zero(); n];
    let mut swapped = vec![false; n];

    for i in 0..n.saturating_sub(1) {
        let sub = off[i];
        if u0[i].abs() >= sub.abs() {
            if u0[i].abs() < floor {
                u0[i] = floor;
            }
            let l = sub / u0[i];
            mult[i] = l;
            u0[i + 1] = u0[i + 1] - l * u1[i];
        } else {
            let l = u0[i] / sub;
            mult[i] = l;
            swapped[i] = true;
            let (old_u0_next, old_u1) = (u0[i + 1], u1[i]);
            let super_next = if i + 1 < n - 1 { off[i + 1] } else { T::zero() };
            u0[i] = sub;
            u1[i] = old_u0_next;
            u2[i] = super_next;
            u0[i + 1] = old_u1 - l * old_u0_next;
            u1[i + 1] = -l * super_next;
        }
    }
    if n > 0 && u0[n - 1].abs() < floor {
        u0[n - 1] = floor;
    }

    for i in 0..n.saturating_sub(1) {
        if swapped[i] {
            rhs.swap(i, i + 1);
        }
        rhs[i + 1] = rhs[i + 1] - mult[i] * rhs[i];
    }
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        if i + 1 < n {
            acc = acc - u1[i] * rhs[i + 1];
        }
        if i + 2 < n {
            acc = acc - u2[i] * rhs[i + 2];
        }
        rhs[i] = acc / u0[i];
    }
}

fn normalize<T: Float>(x: &mut [T]) -> T {
    let norm = x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    if norm > T::zero() {
        x.iter_mut().for_each(|v| *v = *v / norm);
    }
    norm
}

/// The `k` eigenpairs of largest eigenvalue of a symmetric row-major matrix.
pub fn top_eigenpairs<T: Float>(matrix: &[T], n: usize, k: usize, solver: EigenSolver) -> Result<TopEigen<T>> {
    check_input(matrix, n)?;
    if k > n {
        return Err(EigenError::TooManyPairs { requested: k, size: n });
    }
    let full = match solver {
        EigenSolver::Full => true,
        EigenSolver::Partial => false,
        EigenSolver::Auto => n <= AUTO_FULL_LIMIT,
    };
    if full || n <= 2 {
        return Ok(SymmetricEigen::new(matrix, n)?.top(k));
    }

    let tri = tridiagonalize(matrix.to_vec(), n);
    let mut d = tri.diag.clone();
    let mut e = tri.off.clone();
    e.push(T::zero());
    tridiagonal_ql(&mut d, &mut e, None)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap().then(a.cmp(&b)));

    let scale = tri
        .diag
        .iter()
        .zip(tri.off.iter().chain(std::iter::once(&T::zero())))
        .fold(T::zero(), |acc, (&a, &b)| acc.max(a.abs() + b.abs() + b.abs()));
    let eps = T::epsilon();
    let floor = (eps * scale).max(T::min_positive_value());
    let cluster = T::from(1e-3).unwrap() * scale;
    let ten = T::from(10.0).unwrap();

    let mut values: Vec<T> = Vec::with_capacity(k);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut shift_prev: Option<T> = None;
    for (j, &idx) in order.iter().take(k).enumerate() {
        let lambda = d[idx];
        // separate coincident shifts so repeated eigenvalues still yield
        // independent solves
        let mut shift = lambda;
        if let Some(prev) = shift_prev {
            let pert = ten * eps * scale;
            if prev - shift < pert {
                shift = prev - pert;
            }
        }
        shift_prev = Some(shift);

        let mut x: Vec<T> = (0..n)
            .map(|i| {
                let bits = splitmix64(0x5EED ^ j as u64, i as u64) >> 11;
                T::from(bits as f64 / (1u64 << 53) as f64 - 0.5).unwrap()
            })
            .collect();
        normalize(&mut x);
        let neighbors: Vec<usize> = (0..j).filter(|&p| (values[p] - lambda).abs() <= cluster).collect();
        for _ in 0..INVERSE_ITERATIONS {
            shifted_tridiagonal_solve(&tri.diag, &tri.off, shift, floor, &mut x);
            normalize(&mut x);
            for &p in &neighbors {
                let q = &basis[p];
                let dot = q.iter().zip(&x).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                for (xi, &qi) in x.iter_mut().zip(q) {
                    *xi = *xi - dot * qi;
                }
            }
            normalize(&mut x);
        }
        values.push(lambda);
        basis.push(x);
    }

    let mut vectors = Vec::with_capacity(k * n);
    for mut x in basis {
        tri.back_transform(&mut x);
        normalize(&mut x);
        vectors.extend(x);
    }
    Ok(TopEigen { values, vectors, n })
}
