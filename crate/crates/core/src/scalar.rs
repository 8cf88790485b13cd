//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the numerical code is generic over (`f32` or `f64`).
///
/// Reductions that need extra headroom (dot products, norms, sums over a
/// whole similarity row) widen to `f64` through [`Scalar::widen`] regardless
/// of the storage type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    #[inline]
    fn widen(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn narrow(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn lit(value: f64) -> Self {
        Self::narrow(value)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
