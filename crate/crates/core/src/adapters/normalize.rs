use crate::scalar::Scalar;

pub const NORMALIZE_EPSILON: f64 = 1e-9;

/// Min-max normalization `(s - min) / (max - min + eps)`; outputs lie in
/// `[0, 1)` and order is preserved.
pub fn normalize_scores<T: Scalar>(raw: &[T]) -> Vec<T> {
    normalize_scores_over(raw, |_| true)
}

/// Normalizes every entry using the min and max of the entries selected by
/// `include` (all entries when none are selected).
pub fn normalize_scores_over<T: Scalar>(raw: &[T], include: impl Fn(usize) -> bool) -> Vec<T> {
    let bounds = |select: &dyn Fn(usize) -> bool| {
        raw.iter()
            .enumerate()
            .filter(|&(i, _)| select(i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
                (lo.min(v.widen()), hi.max(v.widen()))
            })
    };
    let (mut lo, mut hi) = bounds(&include);
    if !lo.is_finite() {
        (lo, hi) = bounds(&|_| true);
    }
    let span = hi - lo + NORMALIZE_EPSILON;
    raw.iter().map(|v| T::narrow((v.widen() - lo) / span)).collect()
}
