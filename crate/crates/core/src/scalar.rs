use std::str::FromStr;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating point scalar the solver runs on: `f32` or `f64`.
pub trait Scalar: NdFloat + FromPrimitive + FromStr + Default {
    /// Converts an `f64` literal. Every literal used by this crate is
    /// representable (possibly rounded) in both `f32` and `f64`.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
