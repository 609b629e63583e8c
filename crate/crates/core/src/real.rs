//! Floating-point element types usable in tensors.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Storage precision of a tensor element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

/// A real scalar: `f32` (training default) or `f64` (test and oracle precision).
pub trait Real:
    Float
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    #[inline]
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }

    /// Returns `a` when `pred == 1` and `b` when `pred == 0` by masking the
    /// bit patterns. No branch or index depends on `pred`, `a` or `b`.
    fn ct_select(pred: u8, a: Self, b: Self) -> Self;

    /// Smallest positive normal value.
    #[inline]
    fn smallest_normal() -> Self {
        Self::min_positive_value()
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn ct_select(pred: u8, a: Self, b: Self) -> Self {
        let mask = 0u32.wrapping_sub((pred & 1) as u32);
        f32::from_bits((a.to_bits() & mask) | (b.to_bits() & !mask))
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn ct_select(pred: u8, a: Self, b: Self) -> Self {
        let mask = 0u64.wrapping_sub((pred & 1) as u64);
        f64::from_bits((a.to_bits() & mask) | (b.to_bits() & !mask))
    }
}
