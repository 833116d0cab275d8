//! Scalar abstraction: every numeric kernel in this crate is generic over
//! [`Scalar`], instantiated as `f32` or `f64`. The harness uses `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand for lifting an `f64` literal into the scalar type.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn two() -> Self {
        Self::c(2.0)
    }

    #[inline]
    fn half() -> Self {
        Self::c(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Squared Euclidean norm weighted by a diagonal matrix: `sum_i w_i * x_i^2`.
pub fn weighted_sq_norm<T: Scalar>(w: &[T], x: &[T]) -> T {
    debug_assert_eq!(w.len(), x.len());
    w.iter().zip(x).map(|(&wi, &xi)| wi * xi * xi).sum()
}

pub fn all_finite<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}
