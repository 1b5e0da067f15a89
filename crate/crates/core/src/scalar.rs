//! Scalar abstraction for the whole crate.
//!
//! Every numerical routine is generic over [`Real`], which is implemented for
//! `f32` and `f64`. Concrete aliases for the common `f64` instantiation live
//! at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literals and default tolerances.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal must convert")
    }

    /// Conversion from a small count (grid sizes, node counts).
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert to scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product of two equal-length slices.
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = R::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Entrywise maximum absolute value.
pub fn max_abs<R: Real>(a: &[R]) -> R {
    a.iter().fold(R::zero(), |m, x| m.max(x.abs()))
}

/// Maximum absolute difference between two slices.
pub fn max_abs_diff<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(R::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}
