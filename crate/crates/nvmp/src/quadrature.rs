//! Gauss-Hermite expectations under N(m, ν²) and the quadrature evaluation of
//! Ψ used as an independent check on the closed forms.

use crate::error::{Error, Result};
use crate::gauss::std_pdf;
use crate::linalg::tridiag_eigen;
use crate::loss::{
    check_nu, curvature_unchecked, grad_unchecked, value_unchecked, LossSpec, PsiTriple,
};
use crate::scalar::Real;

/// Default order for the logistic production path.
pub const PRODUCTION_ORDER: usize = 31;
/// Default order for oracle evaluations.
pub const ORACLE_ORDER: usize = 61;
/// Order treated as converged for kinked integrands.
pub const KINK_REFERENCE_ORDER: usize = 201;

/// Nodes and weights of a rule normalized to a probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Σ wᵢ f(m + ν xᵢ), failing on the first non-finite value.
    pub fn expect<F: FnMut(T) -> T>(&self, mut f: F, m: T, nu: T) -> Result<T> {
        check_nu(nu)?;
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let at = m + nu * *x;
            let v = f(at);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    node: at.as_f64(),
                    msg: format!("integrand returned {v}"),
                });
            }
            acc += *w * v;
        }
        Ok(acc)
    }
}

/// Builds a rule from the Jacobi matrix of a symmetric weight via Golub-Welsch,
/// symmetrizing ± pairs and normalizing the weights to sum to one.
fn golub_welsch<T: Real>(order: usize, offdiag: impl Fn(usize) -> T) -> Result<QuadratureRule<T>> {
    if order == 0 {
        return Err(Error::domain("quadrature order must be at least 1"));
    }
    let diag = vec![T::zero(); order];
    let off: Vec<T> = (1..order).map(offdiag).collect();
    let (vals, first) = tridiag_eigen(&diag, &off)?;
    let mut pairs: Vec<(T, T)> = vals
        .into_iter()
        .zip(first.into_iter().map(|v| v * v))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    let half = T::of(0.5);
    let mut nodes = vec![T::zero(); order];
    let mut weights = vec![T::zero(); order];
    for i in 0..order {
        let j = order - 1 - i;
        nodes[i] = half * (pairs[i].0 - pairs[j].0);
        weights[i] = half * (pairs[i].1 + pairs[j].1);
    }
    if order % 2 == 1 {
        nodes[order / 2] = T::zero();
    }
    let total: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Probabilists' Gauss-Hermite rule: exact for polynomials of degree ≤ 2·order − 1
/// under N(0, 1).
pub fn gauss_hermite_rule<T: Real>(order: usize) -> Result<QuadratureRule<T>> {
    golub_welsch(order, |k| T::of_usize(k).sqrt())
}

/// Gauss-Legendre rule on [−1, 1] with weights normalized to the uniform
/// probability measure.
pub fn gauss_legendre_rule<T: Real>(order: usize) -> Result<QuadratureRule<T>> {
    golub_welsch(order, |k| {
        let k = T::of_usize(k);
        k / (T::of(4.0) * k * k - T::one()).sqrt()
    })
}

/// E f(η) for η ~ N(m, ν²) with an order-`order` Gauss-Hermite rule.
pub fn agh_expect<T: Real, F: FnMut(T) -> T>(f: F, m: T, nu: T, order: usize) -> Result<T> {
    gauss_hermite_rule(order)?.expect(f, m, nu)
}

/// Half-width of the integration window, in units of ν.
const WINDOW: f64 = 40.0;
/// Width of the uniform panels covering the window, in units of ν.
const PANEL: f64 = 5.0;

/// Panel edges covering [m − 40ν, m + 40ν], split at `breaks`.
pub(crate) fn panel_edges<T: Real>(m: T, nu: T, breaks: &[T]) -> Vec<T> {
    let lo = m - T::of(WINDOW) * nu;
    let hi = m + T::of(WINDOW) * nu;
    let k = (2.0 * WINDOW / PANEL) as usize;
    let mut edges: Vec<T> = (0..=k).map(|i| lo + T::of(PANEL * i as f64) * nu).collect();
    edges.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    edges.sort_by(|a, b| a.partial_cmp(b).expect("finite edges"));
    edges.dedup();
    edges
}

/// E f(η) under N(m, ν²) by Gauss-Legendre on panels split at the breakpoints of f.
pub fn piecewise_expect<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    m: T,
    nu: T,
    breaks: &[T],
    rule: &QuadratureRule<T>,
) -> Result<T> {
    check_nu(nu)?;
    let edges = panel_edges(m, nu, breaks);
    let half = T::of(0.5);
    let mut total = T::zero();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, rad) = (half * (a + b), half * (b - a));
        let mut acc = T::zero();
        for (x, wt) in rule.nodes().iter().zip(rule.weights()) {
            let eta = mid + rad * *x;
            let v = f(eta);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    node: eta.as_f64(),
                    msg: format!("integrand returned {v}"),
                });
            }
            acc += *wt * v * std_pdf((eta - m) / nu);
        }
        total += acc * (b - a) / nu;
    }
    Ok(total)
}

/// Quadrature evaluation of Ψ from the pointwise loss and its weak derivatives.
#[derive(Debug, Clone)]
pub struct PsiQuadrature<T: Real> {
    hermite: QuadratureRule<T>,
    legendre: QuadratureRule<T>,
}

impl<T: Real> PsiQuadrature<T> {
    pub fn new(order: usize) -> Result<Self> {
        Ok(Self {
            hermite: gauss_hermite_rule(order)?,
            legendre: gauss_legendre_rule(order)?,
        })
    }

    pub fn order(&self) -> usize {
        self.hermite.order()
    }

    pub fn hermite(&self) -> &QuadratureRule<T> {
        &self.hermite
    }

    pub fn legendre(&self) -> &QuadratureRule<T> {
        &self.legendre
    }

    /// E f(η) for a loss-derived integrand: plain Gauss-Hermite when the loss is
    /// smooth, breakpoint-split panels otherwise.
    fn expect<F: FnMut(T) -> T>(&self, spec: &LossSpec<T>, y: T, f: F, m: T, nu: T) -> Result<T> {
        let breaks = spec.quadrature_breaks(y, nu);
        if breaks.is_empty() {
            self.hermite.expect(f, m, nu)
        } else {
            piecewise_expect(f, m, nu, &breaks, &self.legendre)
        }
    }

    pub fn psi0(&self, spec: &LossSpec<T>, y: T, m: T, nu: T) -> Result<T> {
        self.expect(spec, y, |eta| value_unchecked(spec, y, eta), m, nu)
    }

    pub fn psi1(&self, spec: &LossSpec<T>, y: T, m: T, nu: T) -> Result<T> {
        self.expect(spec, y, |eta| grad_unchecked(spec, y, eta), m, nu)
    }

    pub fn triple(&self, spec: &LossSpec<T>, y: T, m: T, nu: T) -> Result<PsiTriple<T>> {
        spec.check_response(y)?;
        check_nu(nu)?;
        let psi0 = self.psi0(spec, y, m, nu)?;
        let psi1 = self.psi1(spec, y, m, nu)?;
        let psi2 = if spec.family().has_dirac_curvature() {
            let h = T::of(1e-4) * nu.max(T::one());
            (self.psi1(spec, y, m + h, nu)? - self.psi1(spec, y, m - h, nu)?) / (T::of(2.0) * h)
        } else {
            self.expect(
                spec,
                y,
                |eta| curvature_unchecked(spec, y, eta).expect("smooth family"),
                m,
                nu,
            )?
        };
        Ok(PsiTriple { psi0, psi1, psi2 })
    }
}

/// Ψ by quadrature of order `order`; see [`PsiQuadrature`].
pub fn psi_triple_quadrature<T: Real>(
    spec: &LossSpec<T>,
    y: T,
    m: T,
    nu: T,
    order: usize,
) -> Result<PsiTriple<T>> {
    PsiQuadrature::new(order)?.triple(spec, y, m, nu)
}
