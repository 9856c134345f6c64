//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distr::uniform::SampleUniform;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + SampleUniform
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// A tolerance no finer than what the type can resolve.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::lit(x).max(Self::epsilon() * Self::lit(64.0))
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn from_i64_lossy(n: i64) -> Self {
        Self::from_i64(n).expect("i64 representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest positive value treated as a real mass (below it, entries are window padding).
    #[inline]
    fn mass_floor() -> Self {
        Self::lit(1e-300).max(Self::min_positive_value())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Standard normal density.
pub fn gauss<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-x * x / T::lit(2.0)).exp()
}

/// Density `x e^{-x^2/2}` on `x >= 0` of the Brownian meander at time one.
pub fn meander<T: Real>(x: T) -> T {
    if x < T::zero() {
        T::zero()
    } else {
        x * (-x * x / T::lit(2.0)).exp()
    }
}

/// Standard normal distribution function, evaluated in double precision.
pub fn gauss_cdf<T: Real>(x: T) -> T {
    let v = 0.5 * statrs::function::erf::erfc(-x.as_f64() / std::f64::consts::SQRT_2);
    T::lit(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_respects_precision() {
        assert_eq!(f64::tol(1e-12), 1e-12);
        assert!(f32::tol(1e-12) > 1e-6);
    }

    #[test]
    fn closed_forms() {
        assert!((gauss(0.0f64) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!((meander(1.0f64) - (-0.5f64).exp()).abs() < 1e-16);
        assert_eq!(meander(-1.0f64), 0.0);
        assert!((gauss_cdf(0.0f64) - 0.5).abs() < 1e-15);
    }
}
