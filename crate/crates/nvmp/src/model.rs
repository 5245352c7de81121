//! Model data, variational state, predictor moments, prior precision and the ELBO.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, max_abs, trace_product, Cholesky};
use crate::loss::pairwise_sum;
use crate::scalar::{digamma, Real};

/// Fixed-effect and random-effect design blocks with their prior precision structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks<T: Real> {
    x: DMatrix<T>,
    z: Vec<DMatrix<T>>,
    r_beta: DMatrix<T>,
    r: Vec<DMatrix<T>>,
    c: DMatrix<T>,
    offsets: Vec<usize>,
    logdet_r_beta: Option<T>,
    logdet_r: Vec<Option<T>>,
}

fn check_square_symmetric<T: Real>(m: &DMatrix<T>, dim: usize, name: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::structural(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if asymmetry(m) > T::of(1e-12) * max_abs(m).max(T::one()) {
        return Err(Error::structural(format!("{name} is not symmetric")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::structural(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl<T: Real> DesignBlocks<T> {
    /// Missing precision matrices default to the identity.
    pub fn new(
        x: DMatrix<T>,
        z: Vec<DMatrix<T>>,
        r_beta: Option<DMatrix<T>>,
        r: Vec<Option<DMatrix<T>>>,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if p == 0 {
            return Err(Error::structural("X must have at least one column"));
        }
        if r.len() != z.len() {
            return Err(Error::structural(format!(
                "{} random-effect blocks but {} precision matrices",
                z.len(),
                r.len()
            )));
        }
        for (h, zh) in z.iter().enumerate() {
            if zh.nrows() != n {
                return Err(Error::structural(format!(
                    "Z_{} has {} rows, X has {n}",
                    h + 1,
                    zh.nrows()
                )));
            }
            if zh.ncols() == 0 {
                return Err(Error::structural(format!("Z_{} has no columns", h + 1)));
            }
        }
        if x.iter()
            .chain(z.iter().flat_map(|m| m.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::structural(
                "design matrices contain non-finite entries",
            ));
        }
        let r_beta = r_beta.unwrap_or_else(|| DMatrix::identity(p, p));
        check_square_symmetric(&r_beta, p, "R_beta")?;
        let r: Vec<DMatrix<T>> = r
            .into_iter()
            .zip(&z)
            .map(|(rh, zh)| rh.unwrap_or_else(|| DMatrix::identity(zh.ncols(), zh.ncols())))
            .collect();
        for (h, rh) in r.iter().enumerate() {
            check_square_symmetric(rh, z[h].ncols(), &format!("R_{}", h + 1))?;
        }

        let mut offsets = vec![p];
        for zh in &z {
            offsets.push(offsets.last().unwrap() + zh.ncols());
        }
        let d_star = *offsets.last().unwrap();
        let mut c = DMatrix::zeros(n, d_star);
        c.view_mut((0, 0), (n, p)).copy_from(&x);
        for (h, zh) in z.iter().enumerate() {
            c.view_mut((0, offsets[h]), (n, zh.ncols())).copy_from(zh);
        }
        let logdet = |m: &DMatrix<T>| Cholesky::factor(m).ok().map(|ch| ch.logdet());
        let logdet_r_beta = logdet(&r_beta);
        let logdet_r = r.iter().map(logdet).collect();
        Ok(Self {
            x,
            z,
            r_beta,
            r,
            c,
            offsets,
            logdet_r_beta,
            logdet_r,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of random-effect blocks H.
    pub fn h(&self) -> usize {
        self.z.len()
    }

    /// Size d_h of block `h` (0-based).
    pub fn d(&self, h: usize) -> usize {
        self.z[h].ncols()
    }

    pub fn d_star(&self) -> usize {
        self.c.ncols()
    }

    /// Coordinates of block `h` inside μ.
    pub fn block(&self, h: usize) -> Range<usize> {
        self.offsets[h]..self.offsets[h + 1]
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn z(&self, h: usize) -> &DMatrix<T> {
        &self.z[h]
    }

    pub fn r_beta(&self) -> &DMatrix<T> {
        &self.r_beta
    }

    pub fn r(&self, h: usize) -> &DMatrix<T> {
        &self.r[h]
    }

    /// C = [X, Z_1, …, Z_H].
    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    /// The design restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n()) {
            return Err(Error::structural(format!("row {bad} out of range")));
        }
        let x = self.x.select_rows(rows);
        let z = self.z.iter().map(|m| m.select_rows(rows)).collect();
        let r = self.r.iter().cloned().map(Some).collect();
        Self::new(x, z, Some(self.r_beta.clone()), r)
    }

    fn logdets(&self) -> Result<(T, Vec<T>)> {
        let rb = self.logdet_r_beta.ok_or_else(|| {
            Error::Numerical("R_beta is singular; its log-determinant is undefined".into())
        })?;
        let rh = self
            .logdet_r
            .iter()
            .enumerate()
            .map(|(h, v)| {
                v.ok_or_else(|| {
                    Error::Numerical(format!(
                        "R_{} is singular; its log-determinant is undefined",
                        h + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((rb, rh))
    }
}

/// Prior hyperparameters and the temperature φ.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig<T> {
    pub sigma2_beta: T,
    pub a_eps: T,
    pub b_eps: T,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub phi: T,
}

impl<T: Real> PriorConfig<T> {
    /// σ_β² = 10⁶, A = 2.0001, B = 1.0001, φ = 1 for every block.
    pub fn with_defaults(h: usize) -> Self {
        Self::uniform(T::of(1e6), T::of(2.0001), T::of(1.0001), T::one(), h)
    }

    /// The same A and B for the error and every random-effect variance.
    pub fn uniform(sigma2_beta: T, a: T, b: T, phi: T, h: usize) -> Self {
        Self {
            sigma2_beta,
            a_eps: a,
            b_eps: b,
            a: vec![a; h],
            b: vec![b; h],
            phi,
        }
    }

    pub fn validate(&self, design: &DesignBlocks<T>) -> Result<()> {
        let pos = |v: T, name: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.sigma2_beta, "sigma2_beta")?;
        pos(self.a_eps, "A_eps")?;
        pos(self.b_eps, "B_eps")?;
        pos(self.phi, "phi")?;
        if self.a.len() != design.h() || self.b.len() != design.h() {
            return Err(Error::structural(format!(
                "prior lists have lengths {}/{} but the design has {} random-effect blocks",
                self.a.len(),
                self.b.len(),
                design.h()
            )));
        }
        for (a, b) in self.a.iter().zip(&self.b) {
            pos(*a, "A_h")?;
            pos(*b, "B_h")?;
        }
        Ok(())
    }
}

/// Gaussian factor N(μ, Σ) with Σ's Cholesky factor kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<T: Real> {
    mu: DVector<T>,
    sigma: DMatrix<T>,
    chol: Cholesky<T>,
}

impl<T: Real> GaussianState<T> {
    pub fn new(mu: DVector<T>, sigma: DMatrix<T>) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::structural("Sigma and mu sizes disagree"));
        }
        if asymmetry(&sigma) > T::of(1e-10) * max_abs(&sigma).max(T::one()) {
            return Err(Error::structural("Sigma is not symmetric"));
        }
        let chol = Cholesky::factor(&sigma)
            .map_err(|p| Error::Numerical(format!("Sigma is not positive definite (pivot {p})")))?;
        Ok(Self { mu, sigma, chol })
    }

    pub fn mu(&self) -> &DVector<T> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn chol(&self) -> &Cholesky<T> {
        &self.chol
    }

    pub fn logdet(&self) -> T {
        self.chol.logdet()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Inverse-Gamma factor IG(α, β).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaState<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> InvGammaState<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if alpha > T::zero() && beta > T::zero() && alpha.is_finite() && beta.is_finite() {
            Ok(Self { alpha, beta })
        } else {
            Err(Error::domain(format!(
                "inverse-gamma parameters must be positive, got ({alpha}, {beta})"
            )))
        }
    }

    /// E(1/σ²) = α/β.
    pub fn gamma(&self) -> T {
        self.alpha / self.beta
    }

    /// E log σ² = log β − ψ(α).
    pub fn mean_log(&self) -> T {
        self.beta.ln() - digamma(self.alpha)
    }
}

/// The full mean-field factorization q(β, u) ∏ q(σ_h²) q(σ_ε²).
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<T: Real> {
    pub gauss: GaussianState<T>,
    pub ig_eps: InvGammaState<T>,
    pub ig: Vec<InvGammaState<T>>,
}

impl<T: Real> VariationalState<T> {
    pub fn check(&self, design: &DesignBlocks<T>) -> Result<()> {
        if self.gauss.dim() != design.d_star() || self.ig.len() != design.h() {
            return Err(Error::structural(format!(
                "state has dimension {} with {} variance blocks; design needs {} and {}",
                self.gauss.dim(),
                self.ig.len(),
                design.d_star(),
                design.h()
            )));
        }
        Ok(())
    }

    /// μ = 0, Σ = [R̄⁰]⁻¹ with γ_h = A_h/B_h, and β's at their prior values.
    pub fn prior_init(design: &DesignBlocks<T>, prior: &PriorConfig<T>) -> Result<Self> {
        prior.validate(design)?;
        let ig: Vec<_> = prior
            .a
            .iter()
            .zip(&prior.b)
            .map(|(a, b)| InvGammaState::new(*a, *b))
            .collect::<Result<_>>()?;
        let rbar = assemble_rbar(prior, &ig, design)?;
        let (chol, _) =
            Cholesky::factor_jittered(&rbar, T::of(1e-10), T::of(1e-4), "prior precision")?;
        let gauss = GaussianState::new(DVector::zeros(design.d_star()), chol.inverse())?;
        Ok(Self {
            gauss,
            ig_eps: InvGammaState::new(prior.a_eps, prior.b_eps)?,
            ig,
        })
    }
}

/// m_i = c_iᵀμ and ν_i² = c_iᵀΣc_i.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMoments<T> {
    pub m: Vec<T>,
    pub v2: Vec<T>,
}

pub fn predictor_moments<T: Real>(
    design: &DesignBlocks<T>,
    gauss: &GaussianState<T>,
) -> Result<PredictorMoments<T>> {
    if gauss.dim() != design.d_star() {
        return Err(Error::structural(format!(
            "state dimension {} does not match design dimension {}",
            gauss.dim(),
            design.d_star()
        )));
    }
    let c = design.c();
    let m = c * gauss.mu();
    let cs = c * gauss.sigma();
    let v2: Vec<T> = (0..design.n()).map(|i| cs.row(i).dot(&c.row(i))).collect();
    finish_moments(m.iter().copied().collect(), v2)
}

/// Moments for a subset of observations, in the order given.
pub fn predictor_moments_rows<T: Real>(
    design: &DesignBlocks<T>,
    gauss: &GaussianState<T>,
    rows: &[usize],
) -> Result<PredictorMoments<T>> {
    if gauss.dim() != design.d_star() {
        return Err(Error::structural("state dimension does not match design"));
    }
    let c = design.c();
    let mut m = Vec::with_capacity(rows.len());
    let mut v2 = Vec::with_capacity(rows.len());
    for &i in rows {
        if i >= design.n() {
            return Err(Error::structural(format!("row {i} out of range")));
        }
        let ci = c.row(i).transpose();
        m.push(ci.dot(gauss.mu()));
        v2.push((gauss.sigma() * &ci).dot(&ci));
    }
    finish_moments(m, v2)
}

fn finish_moments<T: Real>(m: Vec<T>, v2: Vec<T>) -> Result<PredictorMoments<T>> {
    if let Some(i) = v2.iter().position(|v| !(*v > T::zero())) {
        return Err(Error::Numerical(format!(
            "predictor variance of observation {i} is {} (all-zero design row?)",
            v2[i]
        )));
    }
    Ok(PredictorMoments { m, v2 })
}

/// R̄ = blockdiag[σ_β⁻²R_β, γ₁R₁, …, γ_H R_H].
pub fn assemble_rbar<T: Real>(
    prior: &PriorConfig<T>,
    ig: &[InvGammaState<T>],
    design: &DesignBlocks<T>,
) -> Result<DMatrix<T>> {
    if ig.len() != design.h() {
        return Err(Error::structural(format!(
            "{} variance states for {} random-effect blocks",
            ig.len(),
            design.h()
        )));
    }
    let d = design.d_star();
    let p = design.p();
    let mut rbar = DMatrix::zeros(d, d);
    rbar.view_mut((0, 0), (p, p))
        .copy_from(&(design.r_beta() / prior.sigma2_beta));
    for (h, q) in ig.iter().enumerate() {
        let b = design.block(h);
        rbar.view_mut((b.start, b.start), (b.len(), b.len()))
            .copy_from(&(design.r(h) * q.gamma()));
    }
    Ok(rbar)
}

/// μᵀR̄μ + tr(R̄Σ).
fn prior_quadratic<T: Real>(gauss: &GaussianState<T>, rbar: &DMatrix<T>) -> T {
    (rbar * gauss.mu()).dot(gauss.mu()) + trace_product(rbar, gauss.sigma())
}

/// E_q log p(β, u | σ²) − E_q log q(β, u), including the −(d_h/2)E log σ_h² terms.
pub fn kl_gaussian_to_prior<T: Real>(
    gauss: &GaussianState<T>,
    rbar: &DMatrix<T>,
    prior: &PriorConfig<T>,
    ig: &[InvGammaState<T>],
    design: &DesignBlocks<T>,
) -> Result<T> {
    if rbar.nrows() != gauss.dim() || ig.len() != design.h() {
        return Err(Error::structural(
            "R̄ or variance states inconsistent with the Gaussian block",
        ));
    }
    let (ld_rb, ld_r) = design.logdets()?;
    let half = T::of(0.5);
    let p = T::of_usize(design.p());
    let mut v = half * gauss.logdet() - half * prior_quadratic(gauss, rbar)
        + half * T::of_usize(design.d_star())
        - half * p * prior.sigma2_beta.ln()
        + half * ld_rb;
    for (h, q) in ig.iter().enumerate() {
        v += half * ld_r[h] - half * T::of_usize(design.d(h)) * q.mean_log();
    }
    Ok(v)
}

/// A log(B/β) − log Γ(A) + log Γ(α) − k(log β − E log σ²) − (B − β)γ with
/// k = `extra_shape`; equals −KL(q ‖ IG(A, B)) when α = A + k.
pub fn kl_invgamma<T: Real>(q: &InvGammaState<T>, a: T, b: T, extra_shape: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero() && q.alpha > T::zero() && q.beta > T::zero())
        || extra_shape < T::zero()
    {
        return Err(Error::domain(
            "inverse-gamma divergence needs positive parameters",
        ));
    }
    Ok(a * (b / q.beta).ln() - a.ln_gamma() + q.alpha.ln_gamma()
        - extra_shape * (q.beta.ln() - q.mean_log())
        - (b - q.beta) * q.gamma())
}

/// The evidence lower bound for the current state, given Ψ₀ at its predictor moments.
pub fn elbo<T: Real>(
    design: &DesignBlocks<T>,
    prior: &PriorConfig<T>,
    state: &VariationalState<T>,
    psi0: &[T],
) -> Result<T> {
    state.check(design)?;
    if psi0.len() != design.n() {
        return Err(Error::structural(format!(
            "{} Ψ₀ values for {} observations",
            psi0.len(),
            design.n()
        )));
    }
    let rbar = assemble_rbar(prior, &state.ig, design)?;
    elbo_with_rbar(design, prior, state, pairwise_sum(psi0), &rbar)
}

pub(crate) fn elbo_with_rbar<T: Real>(
    design: &DesignBlocks<T>,
    prior: &PriorConfig<T>,
    state: &VariationalState<T>,
    psi0_sum: T,
    rbar: &DMatrix<T>,
) -> Result<T> {
    let (ld_rb, ld_r) = design.logdets()?;
    let half = T::of(0.5);
    let phi = prior.phi;
    let n_phi = T::of_usize(design.n()) / phi;
    let g = &state.gauss;
    let eps = &state.ig_eps;
    if !(eps.beta > T::zero()) || state.ig.iter().any(|q| !(q.beta > T::zero())) {
        return Err(Error::domain(
            "inverse-gamma rate parameters must be positive",
        ));
    }
    let p = T::of_usize(design.p());

    let mut v = -eps.gamma() * psi0_sum / phi + half * g.logdet()
        - half * prior_quadratic(g, rbar)
        - half * p * prior.sigma2_beta.ln()
        + half * T::of_usize(design.d_star())
        + half * ld_rb;
    v += (prior.a_eps + n_phi).ln_gamma() - prior.a_eps.ln_gamma()
        + prior.a_eps * (prior.b_eps / eps.beta).ln()
        - n_phi * eps.beta.ln()
        - (prior.b_eps - eps.beta) * eps.gamma();
    for (h, q) in state.ig.iter().enumerate() {
        let (a, b) = (prior.a[h], prior.b[h]);
        let dh = half * T::of_usize(design.d(h));
        v += half * ld_r[h] + (a + dh).ln_gamma() - a.ln_gamma() + a * (b / q.beta).ln()
            - dh * q.beta.ln()
            - (b - q.beta) * q.gamma();
    }
    Ok(v)
}
