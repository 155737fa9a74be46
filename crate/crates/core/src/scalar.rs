//! Scalar abstraction shared by the numeric kernels.
//!
//! Every kernel in [`crate::geometry`], [`crate::attention`] and
//! [`crate::stats`] is written against [`Scalar`], so the same code runs in
//! `f32` (the on-disk trace precision) and `f64` (the analysis precision).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Norm floor below which a vector is treated as degenerate.
pub const EPS_NORM: f64 = 1e-8;

/// Neumaier-compensated sum.
pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let (mut sum, mut carry) = (T::zero(), T::zero());
    for v in values {
        let t = sum + v;
        carry = carry + if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}
