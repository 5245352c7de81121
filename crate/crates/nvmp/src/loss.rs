//! Loss catalog: pointwise losses ψ₀ with weak derivatives, and their Gaussian
//! expectations Ψ₀, Ψ₁, Ψ₂ under η ~ N(m, ν²).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gauss::{
    interval_prob, std_cdf, std_pdf, std_sf, trunc_moment1, trunc_moment2, ScalarGaussian,
};
use crate::quadrature::{
    gauss_hermite_rule, gauss_legendre_rule, panel_edges, QuadratureRule, PRODUCTION_ORDER,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossFamily {
    Quantile,
    Expectile,
    HuberRegression,
    HuberClassification,
    Svr,
    Svc,
    Logistic,
}

impl LossFamily {
    pub const ALL: [LossFamily; 7] = [
        LossFamily::Quantile,
        LossFamily::Expectile,
        LossFamily::HuberRegression,
        LossFamily::HuberClassification,
        LossFamily::Svr,
        LossFamily::Svc,
        LossFamily::Logistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Quantile => "quantile",
            LossFamily::Expectile => "expectile",
            LossFamily::HuberRegression => "huber_regression",
            LossFamily::HuberClassification => "huber_classification",
            LossFamily::Svr => "svr",
            LossFamily::Svc => "svc",
            LossFamily::Logistic => "logistic",
        }
    }

    pub fn uses_tau(self) -> bool {
        matches!(self, LossFamily::Quantile | LossFamily::Expectile)
    }

    pub fn uses_eps(self) -> bool {
        matches!(
            self,
            LossFamily::HuberRegression | LossFamily::HuberClassification | LossFamily::Svr
        )
    }

    pub fn is_classification(self) -> bool {
        matches!(self, LossFamily::Svc | LossFamily::HuberClassification)
    }

    /// Families whose second weak derivative contains a point mass.
    pub fn has_dirac_curvature(self) -> bool {
        matches!(
            self,
            LossFamily::Quantile | LossFamily::Svr | LossFamily::Svc
        )
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = LossFamily::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!(
                    "unknown loss family '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// A loss family together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec<T> {
    family: LossFamily,
    tau: Option<T>,
    eps: Option<T>,
}

impl<T: Real> LossSpec<T> {
    pub fn new(family: LossFamily, tau: Option<T>, eps: Option<T>) -> Result<Self> {
        match (family.uses_tau(), tau) {
            (true, Some(t)) if t > T::zero() && t < T::one() => {}
            (true, Some(t)) => {
                return Err(Error::domain(format!(
                    "{family}: tau must lie in (0, 1), got {t}"
                )))
            }
            (true, None) => return Err(Error::domain(format!("{family}: tau is required"))),
            (false, Some(_)) => {
                return Err(Error::domain(format!(
                    "{family}: tau is not a parameter of this family"
                )))
            }
            (false, None) => {}
        }
        match (family.uses_eps(), eps) {
            (true, Some(e)) if e > T::zero() && e.is_finite() => {}
            (true, Some(e)) => {
                return Err(Error::domain(format!(
                    "{family}: eps must be positive, got {e}"
                )))
            }
            (true, None) => return Err(Error::domain(format!("{family}: eps is required"))),
            (false, Some(_)) => {
                return Err(Error::domain(format!(
                    "{family}: eps is not a parameter of this family"
                )))
            }
            (false, None) => {}
        }
        Ok(Self { family, tau, eps })
    }

    pub fn quantile(tau: T) -> Result<Self> {
        Self::new(LossFamily::Quantile, Some(tau), None)
    }

    pub fn expectile(tau: T) -> Result<Self> {
        Self::new(LossFamily::Expectile, Some(tau), None)
    }

    pub fn huber_regression(eps: T) -> Result<Self> {
        Self::new(LossFamily::HuberRegression, None, Some(eps))
    }

    pub fn huber_classification(eps: T) -> Result<Self> {
        Self::new(LossFamily::HuberClassification, None, Some(eps))
    }

    pub fn svr(eps: T) -> Result<Self> {
        Self::new(LossFamily::Svr, None, Some(eps))
    }

    pub fn svc() -> Self {
        Self {
            family: LossFamily::Svc,
            tau: None,
            eps: None,
        }
    }

    pub fn logistic() -> Self {
        Self {
            family: LossFamily::Logistic,
            tau: None,
            eps: None,
        }
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn tau(&self) -> Option<T> {
        self.tau
    }

    pub fn eps(&self) -> Option<T> {
        self.eps
    }

    fn t(&self) -> T {
        self.tau.expect("validated at construction")
    }

    fn e(&self) -> T {
        self.eps.expect("validated at construction")
    }

    /// Checks that `y` is a legal response for the family.
    pub fn check_response(&self, y: T) -> Result<()> {
        let ok = match self.family {
            LossFamily::Svc | LossFamily::HuberClassification => y == T::one() || y == -T::one(),
            LossFamily::Logistic => y == T::zero() || y == T::one(),
            _ => y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            let want = match self.family {
                LossFamily::Svc | LossFamily::HuberClassification => "a label in {-1, +1}",
                LossFamily::Logistic => "a label in {0, 1}",
                _ => "a finite real",
            };
            Err(Error::domain(format!(
                "{}: response {y} is not {want}",
                self.family
            )))
        }
    }

    /// Points in η where ψ₀ or one of its weak derivatives jumps.
    pub fn breakpoints(&self, y: T) -> Vec<T> {
        match self.family {
            LossFamily::Quantile | LossFamily::Expectile => vec![y],
            LossFamily::HuberRegression | LossFamily::Svr => vec![y - self.e(), y + self.e()],
            LossFamily::Svc => vec![y],
            LossFamily::HuberClassification => {
                let (a, b) = (y * (T::one() - self.e()), y * (T::one() + self.e()));
                if a < b {
                    vec![a, b]
                } else {
                    vec![b, a]
                }
            }
            LossFamily::Logistic => Vec::new(),
        }
    }

    /// Panel breaks for quadrature of loss-derived integrands: the kinks, or a
    /// graded grid around η = 0 for the logistic family once ν exceeds the
    /// Gauss-Hermite range. Empty means plain Gauss-Hermite.
    pub(crate) fn quadrature_breaks(&self, y: T, nu: T) -> Vec<T> {
        if self.family == LossFamily::Logistic {
            if nu > T::of(LOGISTIC_GH_MAX_NU) {
                LOGISTIC_BREAKS.map(T::of).to_vec()
            } else {
                Vec::new()
            }
        } else {
            self.breakpoints(y)
        }
    }

    /// Residual variable x and dx/dη: x = y − η for regression, x = 1 − yη for
    /// margin losses.
    #[inline]
    fn residual(&self, y: T, eta: T) -> (T, T) {
        if self.family.is_classification() {
            (T::one() - y * eta, -y)
        } else {
            (y - eta, -T::one())
        }
    }
}

/// ψ₀(y, η).
pub fn loss_value<T: Real>(spec: &LossSpec<T>, y: T, eta: T) -> Result<T> {
    spec.check_response(y)?;
    Ok(value_unchecked(spec, y, eta))
}

/// An element of the subdifferential of ψ₀ in η; the midpoint at kinks.
pub fn loss_weak_grad<T: Real>(spec: &LossSpec<T>, y: T, eta: T) -> Result<T> {
    spec.check_response(y)?;
    Ok(grad_unchecked(spec, y, eta))
}

/// Pointwise second weak derivative in η, `None` for families whose second
/// derivative is a point mass (quantile, SVR, SVC).
pub fn loss_curvature<T: Real>(spec: &LossSpec<T>, y: T, eta: T) -> Result<Option<T>> {
    spec.check_response(y)?;
    Ok(curvature_unchecked(spec, y, eta))
}

pub(crate) fn value_unchecked<T: Real>(spec: &LossSpec<T>, y: T, eta: T) -> T {
    let half = T::of(0.5);
    let two = T::of(2.0);
    let (x, _) = spec.residual(y, eta);
    match spec.family {
        LossFamily::Quantile => half * x.abs() + (spec.t() - half) * x,
        LossFamily::Expectile => {
            let w = if x <= T::zero() {
                T::one() - spec.t()
            } else {
                spec.t()
            };
            half * x * x * w
        }
        LossFamily::HuberRegression => {
            let e = spec.e();
            if x.abs() <= e {
                x * x / (two * e)
            } else {
                x.abs() - half * e
            }
        }
        LossFamily::HuberClassification => {
            let e = spec.e();
            if x > e {
                x
            } else if x >= -e {
                (e + x) * (e + x) / (T::of(4.0) * e)
            } else {
                T::zero()
            }
        }
        LossFamily::Svr => two * (x.abs() - spec.e()).max(T::zero()),
        LossFamily::Svc => two * x.max(T::zero()),
        LossFamily::Logistic => softplus(eta) - y * eta,
    }
}

pub(crate) fn grad_unchecked<T: Real>(spec: &LossSpec<T>, y: T, eta: T) -> T {
    let half = T::of(0.5);
    let two = T::of(2.0);
    let (x, dx) = spec.residual(y, eta);
    // derivative of the loss in x, then chained through dx/dη
    let dpsi = match spec.family {
        LossFamily::Quantile => spec.t() - half + half * sign(x),
        LossFamily::Expectile => {
            let w = if x <= T::zero() {
                T::one() - spec.t()
            } else {
                spec.t()
            };
            x * w
        }
        LossFamily::HuberRegression => {
            let e = spec.e();
            if x.abs() <= e {
                x / e
            } else {
                sign(x)
            }
        }
        LossFamily::HuberClassification => {
            let e = spec.e();
            if x > e {
                T::one()
            } else if x >= -e {
                (e + x) / (two * e)
            } else {
                T::zero()
            }
        }
        LossFamily::Svr => {
            let e = spec.e();
            let a = x.abs();
            if a > e {
                two * sign(x)
            } else if a == e {
                sign(x)
            } else {
                T::zero()
            }
        }
        LossFamily::Svc => {
            if x > T::zero() {
                two
            } else if x == T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        LossFamily::Logistic => return logistic_sigmoid(eta) - y,
    };
    dpsi * dx
}

pub(crate) fn curvature_unchecked<T: Real>(spec: &LossSpec<T>, y: T, eta: T) -> Option<T> {
    let half = T::of(0.5);
    let two = T::of(2.0);
    let (x, dx) = spec.residual(y, eta);
    let d2 = match spec.family {
        LossFamily::Quantile | LossFamily::Svr | LossFamily::Svc => return None,
        LossFamily::Expectile => {
            let t = spec.t();
            if x < T::zero() {
                T::one() - t
            } else if x > T::zero() {
                t
            } else {
                half
            }
        }
        LossFamily::HuberRegression => {
            let e = spec.e();
            let a = x.abs();
            if a < e {
                e.recip()
            } else if a == e {
                half / e
            } else {
                T::zero()
            }
        }
        LossFamily::HuberClassification => {
            let e = spec.e();
            let a = x.abs();
            if a < e {
                (two * e).recip()
            } else if a == e {
                (T::of(4.0) * e).recip()
            } else {
                T::zero()
            }
        }
        LossFamily::Logistic => {
            let s = logistic_sigmoid(eta);
            return Some(s * (T::one() - s));
        }
    };
    Some(d2 * dx * dx)
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// log(1 + eᵗ) without overflow.
#[inline]
pub fn softplus<T: Real>(t: T) -> T {
    if t > T::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn logistic_sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        (T::one() + (-t).exp()).recip()
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// Expected loss and its first two derivatives in the predictor mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiTriple<T> {
    pub psi0: T,
    pub psi1: T,
    pub psi2: T,
}

/// Ψ(y, m, ν) for the analytic families; logistic uses order-31 Gauss-Hermite.
pub fn psi_triple<T: Real>(spec: &LossSpec<T>, y: T, m: T, nu: T) -> Result<PsiTriple<T>> {
    if spec.family == LossFamily::Logistic {
        PsiEvaluator::new(*spec, PRODUCTION_ORDER)?.triple(y, m, nu)
    } else {
        spec.check_response(y)?;
        check_nu(nu)?;
        Ok(closed_form(spec, y, m, nu))
    }
}

pub(crate) fn check_nu<T: Real>(nu: T) -> Result<()> {
    if nu > T::zero() && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "predictor sd must be positive, got {nu}"
        )))
    }
}

/// Closed forms, derived in the residual variable x ~ N(µ, ν²) and chained to m
/// with dµ/dm = s.
fn closed_form<T: Real>(spec: &LossSpec<T>, y: T, m: T, nu: T) -> PsiTriple<T> {
    let half = T::of(0.5);
    let two = T::of(2.0);
    let inf = T::infinity();
    let (mu, s) = spec.residual(y, m);
    let g = ScalarGaussian::new(mu, nu).expect("validated sd");
    let z0 = -mu / nu;
    // Φ₀ = P(x ≤ 0), φ₀ = density of x at 0
    let cdf0 = std_cdf(z0);
    let pdf0 = std_pdf(z0) / nu;
    let nu2 = nu * nu;

    let (e0, e1, e2) = match spec.family {
        LossFamily::Quantile => {
            let t = spec.t();
            (mu * (t - cdf0) + nu2 * pdf0, t - cdf0, pdf0)
        }
        LossFamily::Expectile => {
            let t = spec.t();
            let k = T::one() - two * t;
            let w = t + k * cdf0;
            (
                half * (mu * mu + nu2) * w - half * k * mu * nu2 * pdf0,
                mu * w - k * nu2 * pdf0,
                w,
            )
        }
        LossFamily::HuberRegression => {
            let e = spec.e();
            let p_in = interval_prob(-e, e, &g).unwrap();
            let p_hi = std_sf((e - mu) / nu);
            let p_lo = std_cdf((-e - mu) / nu);
            let m1_in = trunc_moment1(-e, e, &g).unwrap();
            let m2_in = trunc_moment2(-e, e, &g).unwrap();
            let m1_hi = trunc_moment1(e, inf, &g).unwrap();
            let m1_lo = trunc_moment1(-inf, -e, &g).unwrap();
            (
                m2_in / (two * e) + (m1_hi - half * e * p_hi) - (m1_lo + half * e * p_lo),
                m1_in / e + p_hi - p_lo,
                p_in / e,
            )
        }
        LossFamily::HuberClassification => {
            let e = spec.e();
            let p_in = interval_prob(-e, e, &g).unwrap();
            let p_hi = std_sf((e - mu) / nu);
            let m1_in = trunc_moment1(-e, e, &g).unwrap();
            let m2_in = trunc_moment2(-e, e, &g).unwrap();
            let m1_hi = trunc_moment1(e, inf, &g).unwrap();
            (
                (e * e * p_in + two * e * m1_in + m2_in) / (T::of(4.0) * e) + m1_hi,
                (e * p_in + m1_in) / (two * e) + p_hi,
                p_in / (two * e),
            )
        }
        LossFamily::Svr => {
            let e = spec.e();
            let p_hi = std_sf((e - mu) / nu);
            let p_lo = std_cdf((-e - mu) / nu);
            let m1_hi = trunc_moment1(e, inf, &g).unwrap();
            let m1_lo = trunc_moment1(-inf, -e, &g).unwrap();
            let dens = (std_pdf((e - mu) / nu) + std_pdf((-e - mu) / nu)) / nu;
            (
                two * ((m1_hi - e * p_hi) - (m1_lo + e * p_lo)),
                two * (p_hi - p_lo),
                two * dens,
            )
        }
        LossFamily::Svc => {
            let m1_pos = trunc_moment1(T::zero(), inf, &g).unwrap();
            (two * m1_pos, two * std_sf(z0), two * pdf0)
        }
        LossFamily::Logistic => unreachable!("logistic has no closed form"),
    };
    PsiTriple {
        psi0: e0,
        psi1: s * e1,
        psi2: s * s * e2,
    }
}

/// Predictor sd above which the logistic Ψ switches from Gauss-Hermite to
/// Gauss-Legendre panels graded around η = 0.
const LOGISTIC_GH_MAX_NU: f64 = 1.0;
const LOGISTIC_BREAKS: [f64; 11] = [-16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone)]
struct LogisticRules<T> {
    hermite: QuadratureRule<T>,
    legendre: QuadratureRule<T>,
}

/// Ψ evaluator bound to a loss, caching the quadrature rules used by the
/// logistic family.
#[derive(Debug, Clone)]
pub struct PsiEvaluator<T: Real> {
    spec: LossSpec<T>,
    rule: Option<LogisticRules<T>>,
}

impl<T: Real> PsiEvaluator<T> {
    pub fn new(spec: LossSpec<T>, quad_order: usize) -> Result<Self> {
        let rule = if spec.family == LossFamily::Logistic {
            Some(LogisticRules {
                hermite: gauss_hermite_rule(quad_order)?,
                legendre: gauss_legendre_rule(quad_order)?,
            })
        } else {
            None
        };
        Ok(Self { spec, rule })
    }

    pub fn spec(&self) -> &LossSpec<T> {
        &self.spec
    }

    pub fn triple(&self, y: T, m: T, nu: T) -> Result<PsiTriple<T>> {
        self.spec.check_response(y)?;
        check_nu(nu)?;
        Ok(self.triple_unchecked(y, m, nu))
    }

    pub(crate) fn triple_unchecked(&self, y: T, m: T, nu: T) -> PsiTriple<T> {
        let Some(rules) = &self.rule else {
            return closed_form(&self.spec, y, m, nu);
        };
        let (mut p0, mut p1, mut p2) = (T::zero(), T::zero(), T::zero());
        let mut add = |eta: T, w: T| {
            let sg = logistic_sigmoid(eta);
            p0 += w * (softplus(eta) - y * eta);
            p1 += w * (sg - y);
            p2 += w * sg * (T::one() - sg);
        };
        if nu <= T::of(LOGISTIC_GH_MAX_NU) {
            for (x, w) in rules.hermite.nodes().iter().zip(rules.hermite.weights()) {
                add(m + nu * *x, *w);
            }
        } else {
            let breaks = self.spec.quadrature_breaks(y, nu);
            let half = T::of(0.5);
            for edge in panel_edges(m, nu, &breaks).windows(2) {
                let (mid, rad) = (half * (edge[0] + edge[1]), half * (edge[1] - edge[0]));
                // Legendre weights sum to one, so the panel measure is (b − a)·density.
                let scale = T::of(2.0) * rad / nu;
                for (x, w) in rules.legendre.nodes().iter().zip(rules.legendre.weights()) {
                    let eta = mid + rad * *x;
                    add(eta, *w * scale * std_pdf((eta - m) / nu));
                }
            }
        }
        PsiTriple {
            psi0: p0,
            psi1: p1,
            psi2: p2,
        }
    }

    /// Ψ vectors for observations `rows` (all when `None`) given predictor
    /// means `m` and variances `v2` indexed like `y`.
    pub fn vectors(
        &self,
        y: &[T],
        m: &[T],
        v2: &[T],
        rows: Option<&[usize]>,
    ) -> Result<PsiVectors<T>> {
        let k = rows.map_or(y.len(), |r| r.len());
        let mut out = PsiVectors {
            psi0: Vec::with_capacity(k),
            psi1: Vec::with_capacity(k),
            psi2: Vec::with_capacity(k),
        };
        let mut push = |i: usize| -> Result<()> {
            let nu = v2[i].sqrt();
            check_nu(nu)?;
            let t = self.triple_unchecked(y[i], m[i], nu);
            if !(t.psi0.is_finite() && t.psi1.is_finite() && t.psi2.is_finite()) {
                return Err(Error::Numerical(format!("non-finite Ψ at observation {i}")));
            }
            out.psi0.push(t.psi0);
            out.psi1.push(t.psi1);
            out.psi2.push(t.psi2);
            Ok(())
        };
        match rows {
            Some(r) => r.iter().try_for_each(|&i| push(i))?,
            None => (0..y.len()).try_for_each(&mut push)?,
        }
        Ok(out)
    }
}

/// Per-observation Ψ₀, Ψ₁, Ψ₂.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiVectors<T> {
    pub psi0: Vec<T>,
    pub psi1: Vec<T>,
    pub psi2: Vec<T>,
}

impl<T: Real> PsiVectors<T> {
    pub fn psi0_sum(&self) -> T {
        pairwise_sum(&self.psi0)
    }
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum<T: Real>(v: &[T]) -> T {
    if v.len() <= 16 {
        v.iter().copied().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}
