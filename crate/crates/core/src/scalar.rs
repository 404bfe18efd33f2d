//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the estimators: `f32` or `f64`.
///
/// Everything runs on top of [`RealField`] so dense factorizations come from
/// nalgebra; conversions go through num-traits.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// `ln(2π)`.
    #[inline]
    fn ln_two_pi() -> Self {
        Self::two_pi().ln()
    }

    /// Entropy of a unit-variance normal per dimension, `0.5·ln(2πe)`.
    #[inline]
    fn half_ln_two_pi_e() -> Self {
        Self::lit(0.5) * (Self::ln_two_pi() + Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}
