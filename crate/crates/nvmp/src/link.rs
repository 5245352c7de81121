//! Losses composed with a link, ψ(y, g(η)), evaluated by quadrature.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::loss::{
    check_nu, curvature_unchecked, grad_unchecked, value_unchecked, LossSpec, PsiTriple,
};
use crate::quadrature::{panel_edges, piecewise_expect, PsiQuadrature};
use crate::scalar::Real;

type ScalarMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// A monotone link g with its first two derivatives.
#[derive(Clone)]
pub struct LinkSpec<T> {
    g: ScalarMap<T>,
    g_dot: ScalarMap<T>,
    g_ddot: ScalarMap<T>,
    domain: (T, T),
}

impl<T: Real> fmt::Debug for LinkSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkSpec")
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

const PROBES: usize = 41;

impl<T: Real> LinkSpec<T> {
    /// Validates the derivatives by central differences on a probe grid inside
    /// `domain` (clipped to [−5, 5]) and checks strict monotonicity there.
    pub fn new(
        g: impl Fn(T) -> T + Send + Sync + 'static,
        g_dot: impl Fn(T) -> T + Send + Sync + 'static,
        g_ddot: impl Fn(T) -> T + Send + Sync + 'static,
        domain: (T, T),
    ) -> Result<Self> {
        let (lo, hi) = domain;
        if !(lo < hi) {
            return Err(Error::domain("link domain must be a non-empty interval"));
        }
        let link = Self {
            g: Arc::new(g),
            g_dot: Arc::new(g_dot),
            g_ddot: Arc::new(g_ddot),
            domain,
        };
        let five = T::of(5.0);
        let (plo, phi) = (lo.max(-five), hi.min(five));
        let span = phi - plo;
        let tol = T::of(1e-6);
        let mut direction = T::zero();
        for i in 0..PROBES {
            let frac = (T::of_usize(i) + T::of(0.5)) / T::of_usize(PROBES);
            let x = plo + span * frac;
            let h = T::of(1e-5) * x.abs().max(T::one());
            let (gp, gm) = ((link.g)(x + h), (link.g)(x - h));
            let (dp, dm) = ((link.g_dot)(x + h), (link.g_dot)(x - h));
            let d1 = (link.g_dot)(x);
            let d2 = (link.g_ddot)(x);
            let fd1 = (gp - gm) / (T::of(2.0) * h);
            let fd2 = (dp - dm) / (T::of(2.0) * h);
            if !(fd1 - d1).abs().le(&(tol * d1.abs().max(T::one()))) {
                return Err(Error::domain(format!(
                    "link g_dot inconsistent with g at {x}: {d1} vs {fd1}"
                )));
            }
            if !(fd2 - d2).abs().le(&(tol * d2.abs().max(T::one()))) {
                return Err(Error::domain(format!(
                    "link g_ddot inconsistent with g_dot at {x}: {d2} vs {fd2}"
                )));
            }
            if d1 == T::zero() || (direction != T::zero() && d1.signum() != direction) {
                return Err(Error::domain(format!(
                    "link is not strictly monotone near {x}"
                )));
            }
            direction = d1.signum();
        }
        Ok(link)
    }

    pub fn identity() -> Self {
        Self::affine(T::one(), T::zero())
    }

    /// g(η) = a·η + c.
    pub fn affine(a: T, c: T) -> Self {
        Self {
            g: Arc::new(move |x| a * x + c),
            g_dot: Arc::new(move |_| a),
            g_ddot: Arc::new(|_| T::zero()),
            domain: (T::neg_infinity(), T::infinity()),
        }
    }

    pub fn eval(&self, eta: T) -> Result<(T, T, T)> {
        let (lo, hi) = self.domain;
        if !(eta >= lo && eta <= hi) {
            return Err(Error::Evaluation {
                node: eta.as_f64(),
                msg: "outside the link domain".into(),
            });
        }
        let v = ((self.g)(eta), (self.g_dot)(eta), (self.g_ddot)(eta));
        if v.0.is_finite() && v.1.is_finite() && v.2.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                node: eta.as_f64(),
                msg: "link returned a non-finite value".into(),
            })
        }
    }

    /// Solves g(η) = target on [a, b] by bisection when the bracket holds.
    fn preimage(&self, target: T, a: T, b: T) -> Option<T> {
        let (mut lo, mut hi) = (a.max(self.domain.0), b.min(self.domain.1));
        let (flo, fhi) = ((self.g)(lo) - target, (self.g)(hi) - target);
        if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
            return None;
        }
        let rising = fhi > flo;
        for _ in 0..200 {
            let mid = T::of(0.5) * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let above = (self.g)(mid) > target;
            if above == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(T::of(0.5) * (lo + hi))
    }
}

/// Ψ for ψ(y, g(η)) under η ~ N(m, ν²) with `nodes` quadrature nodes per panel.
pub fn psi_triple_linked<T: Real>(
    spec: &LossSpec<T>,
    link: &LinkSpec<T>,
    y: T,
    m: T,
    nu: T,
    nodes: usize,
) -> Result<PsiTriple<T>> {
    spec.check_response(y)?;
    check_nu(nu)?;
    let quad = PsiQuadrature::new(nodes)?;
    let psi0 = linked_expect(spec, link, y, m, nu, &quad, |u, _, _| {
        value_unchecked(spec, y, u)
    })?;
    let psi1 = linked_psi1(spec, link, y, m, nu, &quad)?;
    let psi2 = if spec.family().has_dirac_curvature() {
        let h = T::of(1e-4) * nu.max(T::one());
        (linked_psi1(spec, link, y, m + h, nu, &quad)?
            - linked_psi1(spec, link, y, m - h, nu, &quad)?)
            / (T::of(2.0) * h)
    } else {
        linked_expect(spec, link, y, m, nu, &quad, |u, d1, d2| {
            curvature_unchecked(spec, y, u).expect("smooth family") * d1 * d1
                + grad_unchecked(spec, y, u) * d2
        })?
    };
    Ok(PsiTriple { psi0, psi1, psi2 })
}

fn linked_psi1<T: Real>(
    spec: &LossSpec<T>,
    link: &LinkSpec<T>,
    y: T,
    m: T,
    nu: T,
    quad: &PsiQuadrature<T>,
) -> Result<T> {
    linked_expect(spec, link, y, m, nu, quad, |u, d1, _| {
        grad_unchecked(spec, y, u) * d1
    })
}

fn linked_expect<T: Real>(
    spec: &LossSpec<T>,
    link: &LinkSpec<T>,
    y: T,
    m: T,
    nu: T,
    quad: &PsiQuadrature<T>,
    f: impl Fn(T, T, T) -> T,
) -> Result<T> {
    let mut failure = None;
    let mut integrand = |eta: T| match link.eval(eta) {
        Ok((u, d1, d2)) => f(u, d1, d2),
        Err(e) => {
            failure.get_or_insert(e);
            T::zero()
        }
    };
    let breaks_g = spec.quadrature_breaks(y, nu);
    let value = if breaks_g.is_empty() {
        quad.hermite().expect(&mut integrand, m, nu)?
    } else {
        let edges = panel_edges(m, nu, &[]);
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let breaks: Vec<T> = breaks_g
            .iter()
            .filter_map(|b| link.preimage(*b, lo, hi))
            .collect();
        piecewise_expect(&mut integrand, m, nu, &breaks, quad.legendre())?
    };
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::psi_triple;

    #[test]
    fn identity_link_reproduces_closed_form() {
        let q = LossSpec::<f64>::quantile(0.5).unwrap();
        let a = psi_triple_linked(&q, &LinkSpec::identity(), 0.0, 0.0, 1.0, 61).unwrap();
        let b = psi_triple(&q, 0.0, 0.0, 1.0).unwrap();
        assert!((a.psi0 - b.psi0).abs() <= 1e-8 * b.psi0);
        assert!((a.psi1 - b.psi1).abs() <= 1e-8);
    }

    #[test]
    fn doubling_link_scales_curvature_by_four() {
        let e = LossSpec::<f64>::expectile(0.5).unwrap();
        let lin = psi_triple_linked(&e, &LinkSpec::affine(2.0, 0.0), 1.0, 0.3, 0.5, 61).unwrap();
        let id = psi_triple(&e, 1.0, 0.6, 1.0).unwrap();
        assert!((lin.psi2 - 4.0 * id.psi2).abs() < 1e-10);
        assert!((lin.psi0 - id.psi0).abs() < 1e-10);
    }

    #[test]
    fn shift_link_is_translation() {
        let s = LossSpec::<f64>::svr(0.3).unwrap();
        let lin = psi_triple_linked(&s, &LinkSpec::affine(1.0, 0.7), 0.5, -0.2, 0.8, 61).unwrap();
        let id = psi_triple(&s, 0.5, 0.5, 0.8).unwrap();
        assert!((lin.psi0 - id.psi0).abs() < 1e-10);
        assert!((lin.psi1 - id.psi1).abs() < 1e-10);
        assert!((lin.psi2 - id.psi2).abs() < 1e-6);
    }

    #[test]
    fn construction_rejects_inconsistent_derivatives() {
        let bad =
            LinkSpec::<f64>::new(|x| x * x * x + x, |x| 3.0 * x * x, |x| 6.0 * x, (-2.0, 2.0));
        assert!(bad.is_err());
        let ok = LinkSpec::<f64>::new(
            |x| x * x * x + x,
            |x| 3.0 * x * x + 1.0,
            |x| 6.0 * x,
            (-2.0, 2.0),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn failure_inside_range_reports_node() {
        let log = LinkSpec::<f64>::new(
            |x| x.ln(),
            |x| x.recip(),
            |x| -(x * x).recip(),
            (1e-300, f64::INFINITY),
        )
        .unwrap();
        let q = LossSpec::<f64>::quantile(0.5).unwrap();
        let err = psi_triple_linked(&q, &log, 0.0, 0.5, 1.0, 31).unwrap_err();
        assert!(matches!(err, Error::Evaluation { .. }));
    }
}
