//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the library (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + nalgebra::Scalar
    + Send
    + Sync
    + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Natural logarithm of |Γ(x)|.
    fn ln_gamma(self) -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count.
    #[inline]
    fn of_usize(k: usize) -> Self {
        Self::from_usize(k).expect("count representable")
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    #[inline]
    fn ln_gamma(self) -> Self {
        libm::lgamma_r(self).0
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    #[inline]
    fn ln_gamma(self) -> Self {
        libm::lgammaf_r(self).0
    }
}

/// Digamma function ψ(x) for x > 0.
pub fn digamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    let start = T::of(16.0);
    while x < start {
        acc -= x.recip();
        x += T::one();
    }
    let r = x.recip();
    let r2 = r * r;
    let series = r2
        * (T::of(-1.0 / 12.0)
            + r2 * (T::of(1.0 / 120.0)
                + r2 * (T::of(-1.0 / 252.0)
                    + r2 * (T::of(1.0 / 240.0) + r2 * T::of(-1.0 / 132.0)))));
    acc + x.ln() - T::of(0.5) * r + series
}

/// Trigamma function ψ₁(x) for x > 0.
pub fn trigamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    let ten = T::of(10.0);
    while x < ten {
        acc += (x * x).recip();
        x += T::one();
    }
    let r = x.recip();
    let r2 = r * r;
    let series = r
        + T::of(0.5) * r2
        + r * r2
            * (T::of(1.0 / 6.0)
                + r2 * (T::of(-1.0 / 30.0)
                    + r2 * (T::of(1.0 / 42.0)
                        + r2 * (T::of(-1.0 / 30.0) + r2 * T::of(5.0 / 66.0)))));
    acc + series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_reference_values() {
        // Euler-Mascheroni constant and ψ(1/2) = −γ − 2 ln 2.
        let euler = 0.577_215_664_901_532_9_f64;
        assert!((digamma(1.0_f64) + euler).abs() < 1e-14);
        assert!((digamma(0.5_f64) + euler + 2.0 * 2.0_f64.ln()).abs() < 1e-14);
        assert!((digamma(2.0001_f64) - digamma(1.0001_f64) - 1.0 / 1.0001).abs() < 1e-13);
    }

    #[test]
    fn trigamma_reference_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0_f64) - pi2 / 6.0).abs() < 1e-13);
        assert!((trigamma(0.5_f64) - pi2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        assert!((Real::ln_gamma(5.0_f64) - 24.0_f64.ln()).abs() < 1e-14);
        assert!((Real::ln_gamma(5.0_f32) - 24.0_f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn f32_digamma_is_close_to_f64() {
        let a = digamma(3.7_f32) as f64;
        let b = digamma(3.7_f64);
        assert!((a - b).abs() < 1e-5);
    }
}
