//! Scalar abstraction for the engine.
//!
//! All model arithmetic is generic over [`Real`] so portfolios can be run in
//! `f32` or `f64`. File input carries `f64` precision and linear-algebra
//! plumbing runs in `f64` regardless of the model scalar, so the trait
//! carries explicit, infallible conversions in both directions.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar type the engine operates on.
pub trait Real:
    Float + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Widens to `f64` for diagnostics, simulation and file output.
    fn as_f64(self) -> f64;

    /// Narrows from `f64` file input and tolerance constants.
    fn from_f64(v: f64) -> Self;
}

impl Real for f32 {
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Compensated (Kahan) summation.
///
/// Aggregation radicands mix positive and negative cross terms; plain
/// left-to-right summation loses enough precision on near-cancelling inputs
/// to push small radicands past the sign tolerance.
pub(crate) fn kahan_sum<T: Real, I: IntoIterator<Item = T>>(items: I) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for x in items {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}
