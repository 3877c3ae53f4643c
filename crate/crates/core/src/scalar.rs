//! Floating-point scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the decomposition is computed in: `f32` or `f64`.
///
/// The probability weights, basis columns, Gram entries and coefficients all
/// live in the same scalar type. Tolerances that depend on the precision are
/// exposed here so that generic code never hard-codes an `f64` threshold.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Relative threshold below which a residual is treated as numerical zero
    /// by the rank tracker and the linear solvers.
    fn default_tolerance() -> Self;

    /// Tolerance for checking that probability weights sum to one.
    fn weight_sum_tolerance() -> Self;

    /// Lossless-enough conversion from an `f64` literal.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn default_tolerance() -> Self {
        1e-9
    }

    fn weight_sum_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn default_tolerance() -> Self {
        1e-4
    }

    fn weight_sum_tolerance() -> Self {
        1e-5
    }
}

/// Plain dot product.
pub(crate) fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Dot product under a diagonal weighting `Σ w_k u_k v_k`.
pub(crate) fn weighted_dot<T: Scalar>(weights: &[T], u: &[T], v: &[T]) -> T {
    weights
        .iter()
        .zip(u.iter().zip(v))
        .fold(T::zero(), |acc, (&w, (&a, &b))| acc + w * a * b)
}

/// `y += alpha * x`
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}
