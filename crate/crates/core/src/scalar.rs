//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All solvers are written against [`Real`], so they run unchanged on `f32`
//! and `f64`. The crate root re-exports `f64` aliases for everyday use; the
//! tolerances quoted throughout the docs assume double precision.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts to `f64` for reporting and hashing.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Converts a count into `Self`.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `½·log₂(πe/2)`: the gap between the upper and lower capacity bounds.
pub fn gap_constant<T: Real>() -> T {
    half_log2(T::PI() * T::E() / T::lit(2.0))
}

/// `½·log₂(πe/6)`: the loss of a uniform input against a Gaussian one.
pub fn uniform_input_loss<T: Real>() -> T {
    half_log2(T::PI() * T::E() / T::lit(6.0))
}

#[inline]
pub(crate) fn half_log2<T: Real>(x: T) -> T {
    x.ln() / (T::lit(2.0) * T::LN_2())
}

/// `½·log₂(1 + x)`, accurate for small `x`.
#[inline]
pub(crate) fn half_log2_1p<T: Real>(x: T) -> T {
    x.ln_1p() / (T::lit(2.0) * T::LN_2())
}

/// `1 - (1 - p)^n` without cancellation for small `p`.
#[inline]
pub(crate) fn one_minus_pow_complement<T: Real>(p: T, n: usize) -> T {
    if p >= T::one() {
        return T::one();
    }
    -(T::from_count(n) * (-p).ln_1p()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_direct_evaluation() {
        let g: f64 = gap_constant();
        let direct = 0.5 * (std::f64::consts::PI * std::f64::consts::E / 2.0).log2();
        assert!((g - direct).abs() < 1e-15);
        assert!((g - 1.047_095_585).abs() < 1e-8);
        let u: f64 = uniform_input_loss();
        assert!((u - 0.254_614_335).abs() < 1e-8);
        // ½log₂(πe/2) = ½log₂(πe/6) + ½log₂3
        assert!((g - u - 0.5 * 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn complement_power_is_stable() {
        let a: f64 = one_minus_pow_complement(1e-12, 3);
        assert!((a - 3e-12).abs() < 1e-22);
        assert_eq!(one_minus_pow_complement(1.0f64, 5), 1.0);
        let b: f32 = one_minus_pow_complement(0.5f32, 2);
        assert!((b - 0.75).abs() < 1e-6);
    }
}
