//! Scalar Gaussian primitives and truncated-moment identities.
//!
//! Everything is expressed for x ~ N(µ, ν²). Interval endpoints may be ±∞.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A univariate Gaussian law N(mean, sd²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGaussian<T> {
    mean: T,
    sd: T,
}

impl<T: Real> ScalarGaussian<T> {
    pub fn new(mean: T, sd: T) -> Result<Self> {
        check_sd(sd)?;
        if !mean.is_finite() {
            return Err(Error::domain(format!(
                "gaussian mean must be finite, got {mean}"
            )));
        }
        Ok(Self { mean, sd })
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn sd(&self) -> T {
        self.sd
    }

    #[inline]
    fn z(&self, x: T) -> T {
        (x - self.mean) / self.sd
    }
}

fn check_sd<T: Real>(sd: T) -> Result<()> {
    if sd > T::zero() && sd.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "standard deviation must be positive and finite, got {sd}"
        )))
    }
}

/// Standard normal density.
#[inline]
pub fn std_pdf<T: Real>(z: T) -> T {
    let inv_sqrt_2pi = T::FRAC_2_SQRT_PI() * T::FRAC_1_SQRT_2() * T::of(0.5);
    (-(z * z) * T::of(0.5)).exp() * inv_sqrt_2pi
}

/// Standard normal CDF Φ(z), accurate in relative terms in the lower tail.
#[inline]
pub fn std_cdf<T: Real>(z: T) -> T {
    T::of(0.5) * (-z * T::FRAC_1_SQRT_2()).erfc()
}

/// Standard normal survival function 1 − Φ(z), accurate in the upper tail.
#[inline]
pub fn std_sf<T: Real>(z: T) -> T {
    T::of(0.5) * (z * T::FRAC_1_SQRT_2()).erfc()
}

/// z·φ(z) with the convention 0 at z = ±∞.
#[inline]
fn z_pdf<T: Real>(z: T) -> T {
    if z.is_infinite() {
        T::zero()
    } else {
        z * std_pdf(z)
    }
}

/// P(za ≤ Z ≤ zb) for a standard normal Z, choosing the tail that avoids cancellation.
pub fn std_interval<T: Real>(za: T, zb: T) -> T {
    if !(zb > za) {
        return T::zero();
    }
    let width = zb - za;
    if width < T::of(1e-8) {
        return std_pdf(T::of(0.5) * (za + zb)) * width;
    }
    if za >= T::zero() {
        std_sf(za) - std_sf(zb)
    } else if zb <= T::zero() {
        std_cdf(zb) - std_cdf(za)
    } else {
        T::one() - std_cdf(za) - std_sf(zb)
    }
}

pub fn normal_pdf<T: Real>(x: T, mean: T, sd: T) -> Result<T> {
    check_sd(sd)?;
    Ok(std_pdf((x - mean) / sd) / sd)
}

pub fn normal_cdf<T: Real>(x: T, mean: T, sd: T) -> Result<T> {
    check_sd(sd)?;
    Ok(std_cdf((x - mean) / sd))
}

/// P(a ≤ x ≤ b).
pub fn interval_prob<T: Real>(a: T, b: T, g: &ScalarGaussian<T>) -> Result<T> {
    check_interval(a, b)?;
    Ok(std_interval(g.z(a), g.z(b)))
}

/// E δ₀(x − c) = φ(c; µ, ν²).
pub fn dirac_moment<T: Real>(c: T, g: &ScalarGaussian<T>) -> T {
    std_pdf(g.z(c)) / g.sd
}

/// E sign(x) = 1 − 2Φ(0; µ, ν²).
pub fn sign_moment<T: Real>(g: &ScalarGaussian<T>) -> T {
    T::one() - T::of(2.0) * std_cdf(g.z(T::zero()))
}

/// E|x| = µ(1 − 2Φ₀) + 2ν²φ₀.
pub fn abs_moment<T: Real>(g: &ScalarGaussian<T>) -> T {
    g.mean * sign_moment(g) + T::of(2.0) * g.sd * std_pdf(g.mean / g.sd)
}

/// E[x·1{a ≤ x ≤ b}] = µ[Φ(b) − Φ(a)] − ν²[φ(b) − φ(a)].
pub fn trunc_moment1<T: Real>(a: T, b: T, g: &ScalarGaussian<T>) -> Result<T> {
    check_interval(a, b)?;
    if a == b {
        return Ok(T::zero());
    }
    if let Some((_, m1, _)) = tail_moments(a, b, g) {
        return Ok(m1);
    }
    let (za, zb) = (g.z(a), g.z(b));
    let p = std_interval(za, zb);
    Ok(g.mean * p + g.sd * (std_pdf(za) - std_pdf(zb)))
}

/// E[x²·1{a ≤ x ≤ b}] = (µ² + ν²)[Φ(b) − Φ(a)] − ν²[(b + µ)φ(b) − (a + µ)φ(a)].
pub fn trunc_moment2<T: Real>(a: T, b: T, g: &ScalarGaussian<T>) -> Result<T> {
    check_interval(a, b)?;
    if a == b {
        return Ok(T::zero());
    }
    if let Some((_, _, m2)) = tail_moments(a, b, g) {
        return Ok(m2.max(T::zero()));
    }
    let (mu, nu) = (g.mean, g.sd);
    let (za, zb) = (g.z(a), g.z(b));
    let p = std_interval(za, zb);
    let two = T::of(2.0);
    // (b + µ)νφ(zb) written as ν²·zb·φ(zb) + 2µνφ(zb) so that infinite ends vanish.
    let edge = |z: T| nu * nu * z_pdf(z) + two * mu * nu * std_pdf(z);
    let v = (mu * mu + nu * nu) * p - (edge(zb) - edge(za));
    Ok(v.max(T::zero()))
}

/// Standardized distance from the mean past which an interval counts as a tail.
const TAIL_Z: f64 = 5.0;
const TAIL_TERMS: usize = 120;

/// J_k(z)/φ(z) for k = 0, 1, 2, where J_k(z) = ∫_z^∞ (t − z)^k φ(t) dt.
///
/// With the Mills-ratio convergents f_n = 1/(z + (n+1) f_{n+1}), J_k/φ = k! f₀⋯f_k,
/// which avoids the cancellation in (1 + z²)Q(z) − zφ(z).
fn shifted_tail<T: Real>(z: T) -> (T, T, T) {
    let mut f = z.recip();
    let mut head = [T::zero(); 3];
    for n in (0..TAIL_TERMS).rev() {
        f = (z + T::of_usize(n + 1) * f).recip();
        if n < 3 {
            head[n] = f;
        }
    }
    let j1 = head[0] * head[1];
    (head[0], j1, T::of(2.0) * j1 * head[2])
}

/// E[x^k 1{x ≥ a}], k = 0, 1, 2, for a at least TAIL_Z sd above the mean.
fn upper_tail<T: Real>(a: T, mean: T, sd: T) -> (T, T, T) {
    if a == T::infinity() {
        return (T::zero(), T::zero(), T::zero());
    }
    let z = (a - mean) / sd;
    let (j0, j1, j2) = shifted_tail(z);
    let p = std_pdf(z);
    (
        p * j0,
        p * (a * j0 + sd * j1),
        p * (a * a * j0 + T::of(2.0) * a * sd * j1 + sd * sd * j2),
    )
}

/// Truncated moments in closed form when [a, b] lies entirely in one far tail.
fn tail_moments<T: Real>(a: T, b: T, g: &ScalarGaussian<T>) -> Option<(T, T, T)> {
    let cut = T::of(TAIL_Z);
    if g.z(a) >= cut {
        let (lo, hi) = (upper_tail(a, g.mean, g.sd), upper_tail(b, g.mean, g.sd));
        Some((lo.0 - hi.0, lo.1 - hi.1, lo.2 - hi.2))
    } else if g.z(b) <= -cut {
        // mirror x → −x
        let (lo, hi) = (upper_tail(-b, -g.mean, g.sd), upper_tail(-a, -g.mean, g.sd));
        Some((lo.0 - hi.0, hi.1 - lo.1, lo.2 - hi.2))
    } else {
        None
    }
}

fn check_interval<T: Real>(a: T, b: T) -> Result<()> {
    if a.is_nan() || b.is_nan() || a > b {
        Err(Error::domain(format!(
            "interval requires a ≤ b, got ({a}, {b})"
        )))
    } else {
        Ok(())
    }
}
