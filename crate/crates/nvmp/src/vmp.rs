//! Batch non-conjugate variational message passing.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};
use crate::loss::{LossSpec, PsiEvaluator, PsiVectors};
use crate::model::{
    assemble_rbar, elbo_with_rbar, predictor_moments, DesignBlocks, GaussianState, InvGammaState,
    PriorConfig, VariationalState,
};
use crate::quadrature::PRODUCTION_ORDER;
use crate::scalar::Real;
use crate::svmp::{blend, minibatch_terms};

/// Largest diagonal jitter tried before a factorization is declared singular.
pub const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<T> {
    pub max_iter: usize,
    /// Relative ELBO change threshold.
    pub tol: T,
    pub quad_order: usize,
    pub seed: u64,
    /// First jitter tried when −H fails to factor.
    pub jitter: T,
    /// Step halvings tried when a full sweep lowers the ELBO or fails; 0 runs
    /// the undamped fixed-point iteration.
    pub max_halvings: usize,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: T::of(1e-6),
            quad_order: PRODUCTION_ORDER,
            seed: 0,
            jitter: T::of(1e-10),
            max_halvings: 30,
        }
    }
}

impl<T: Real> FitOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.jitter >= T::zero()) {
            return Err(Error::Config(format!(
                "jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        if self.quad_order == 0 {
            return Err(Error::Config("quad_order must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T: Real> {
    pub state: VariationalState<T>,
    pub elbo_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
    pub diagnostics: BTreeMap<String, f64>,
    /// Wall time of each iteration, in seconds.
    pub iteration_seconds: Vec<f64>,
    /// Step index of each trace entry (1-based).
    pub trace_steps: Vec<usize>,
}

impl<T: Real> FitReport<T> {
    pub fn final_elbo(&self) -> Option<T> {
        self.elbo_trace.last().copied()
    }
}

/// |new/old − 1|, or |new − old| when old = 0.
pub fn relative_change<T: Real>(old: T, new: T) -> T {
    if old == T::zero() {
        (new - old).abs()
    } else {
        (new / old - T::one()).abs()
    }
}

/// α_ε = A_ε + n/φ, β_ε = B_ε + ΣΨ₀/φ.
pub fn update_sigma_eps<T: Real>(
    prior: &PriorConfig<T>,
    n: usize,
    psi0_sum: T,
) -> Result<InvGammaState<T>> {
    InvGammaState::new(
        prior.a_eps + T::of_usize(n) / prior.phi,
        prior.b_eps + psi0_sum / prior.phi,
    )
}

/// α_h = A_h + d_h/2, β_h = B_h + (μ_hᵀR_hμ_h + tr(R_hΣ_hh))/2.
pub fn update_sigma_h<T: Real>(
    prior: &PriorConfig<T>,
    h: usize,
    gauss: &GaussianState<T>,
    design: &DesignBlocks<T>,
) -> Result<InvGammaState<T>> {
    if h >= design.h() || h >= prior.a.len() {
        return Err(Error::structural(format!(
            "random-effect block {h} out of range"
        )));
    }
    let b = design.block(h);
    let r = design.r(h);
    let mu_h = gauss.mu().rows(b.start, b.len());
    let s_h = gauss.sigma().view((b.start, b.start), (b.len(), b.len()));
    let quad = (r * mu_h).dot(&mu_h);
    let mut tr = T::zero();
    for i in 0..b.len() {
        for j in 0..b.len() {
            tr += r[(i, j)] * s_h[(j, i)];
        }
    }
    let half = T::of(0.5);
    InvGammaState::new(
        prior.a[h] + half * T::of_usize(b.len()),
        prior.b[h] + half * (quad + tr),
    )
}

/// g = −R̄μ − (γ_ε/φ)CᵀΨ₁ and −H = R̄ + (γ_ε/φ)Cᵀdiag(Ψ₂)C with every
/// observation term multiplied by `scale`.
pub fn gradient_hessian<T: Real>(
    c: &DMatrix<T>,
    mu: &DVector<T>,
    rbar: &DMatrix<T>,
    gamma_eps: T,
    phi: T,
    psi1: &[T],
    psi2: &[T],
    scale: T,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = c.nrows();
    if psi1.len() != n || psi2.len() != n || rbar.nrows() != c.ncols() || mu.len() != c.ncols() {
        return Err(Error::structural(
            "Ψ vectors, design and state sizes disagree",
        ));
    }
    let w = scale * gamma_eps / phi;
    let p1 = DVector::from_column_slice(psi1);
    let mut g = -(rbar * mu);
    g -= c.tr_mul(&p1) * w;
    let mut scaled = c.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= psi2[i];
    }
    let mut neg_h = c.tr_mul(&scaled) * w;
    neg_h += rbar;
    symmetrize(&mut neg_h);
    Ok((g, neg_h))
}

/// Solves the Newton system: Σ = (−H)⁻¹, μ ← μ + Σg. Returns the jitter used.
pub(crate) fn newton_solve<T: Real>(
    mu: &DVector<T>,
    g: &DVector<T>,
    neg_h: &DMatrix<T>,
    jitter: T,
) -> Result<(GaussianState<T>, T)> {
    let (chol, used) =
        Cholesky::factor_jittered(neg_h, jitter, T::of(MAX_JITTER), "negative Hessian")?;
    let sigma = chol.inverse();
    let mu_new = mu + chol.solve_vec(g);
    Ok((GaussianState::new(mu_new, sigma)?, used))
}

/// One Gaussian update given Ψ₁, Ψ₂ at the current state and the current R̄.
pub fn gauss_step<T: Real>(
    design: &DesignBlocks<T>,
    prior: &PriorConfig<T>,
    state: &VariationalState<T>,
    psi1: &[T],
    psi2: &[T],
    rbar: &DMatrix<T>,
) -> Result<GaussianState<T>> {
    if psi2.iter().any(|v| *v < T::zero()) {
        return Err(Error::domain("Ψ₂ must be non-negative"));
    }
    let (g, neg_h) = gradient_hessian(
        design.c(),
        state.gauss.mu(),
        rbar,
        state.ig_eps.gamma(),
        prior.phi,
        psi1,
        psi2,
        T::one(),
    )?;
    Ok(newton_solve(state.gauss.mu(), &g, &neg_h, T::of(1e-10))?.0)
}

/// Ψ vectors at the state's predictor moments.
pub fn psi_at<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    evaluator: &PsiEvaluator<T>,
    gauss: &GaussianState<T>,
) -> Result<PsiVectors<T>> {
    let pm = predictor_moments(design, gauss)?;
    evaluator.vectors(y, &pm.m, &pm.v2, None)
}

/// One full sweep: σ_ε², then every σ_h², then R̄ and the Gaussian block.
/// `psi` must be evaluated at `state`. Returns the new state, its R̄ and the jitter used.
pub fn vmp_sweep<T: Real>(
    design: &DesignBlocks<T>,
    prior: &PriorConfig<T>,
    state: &VariationalState<T>,
    psi: &PsiVectors<T>,
    jitter: T,
) -> Result<(VariationalState<T>, DMatrix<T>, T)> {
    let ig_eps = update_sigma_eps(prior, design.n(), psi.psi0_sum())?;
    let ig = (0..design.h())
        .map(|h| update_sigma_h(prior, h, &state.gauss, design))
        .collect::<Result<Vec<_>>>()?;
    let rbar = assemble_rbar(prior, &ig, design)?;
    let (g, neg_h) = gradient_hessian(
        design.c(),
        state.gauss.mu(),
        &rbar,
        ig_eps.gamma(),
        prior.phi,
        &psi.psi1,
        &psi.psi2,
        T::one(),
    )?;
    let (gauss, used) = newton_solve(state.gauss.mu(), &g, &neg_h, jitter)?;
    Ok((VariationalState { gauss, ig_eps, ig }, rbar, used))
}

pub(crate) fn check_inputs<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    spec: &LossSpec<T>,
) -> Result<()> {
    if y.len() != design.n() {
        return Err(Error::structural(format!(
            "{} responses for {} design rows",
            y.len(),
            design.n()
        )));
    }
    prior.validate(design)?;
    for (i, v) in y.iter().enumerate() {
        spec.check_response(*v)
            .map_err(|e| Error::domain(format!("observation {i}: {e}")))?;
    }
    Ok(())
}

/// Running record of ELBO behaviour shared by the engines.
#[derive(Debug, Default)]
pub(crate) struct TraceMonitor {
    pub decreases: usize,
    pub max_drop: f64,
    pub max_jitter: f64,
}

impl TraceMonitor {
    pub fn observe<T: Real>(&mut self, prev: T, next: T) {
        if next < prev {
            let drop = ((prev - next) / prev.abs().max(T::min_positive_value())).as_f64();
            if drop > 1e-8 {
                self.decreases += 1;
            }
            self.max_drop = self.max_drop.max(drop);
        }
    }

    pub fn jitter<T: Real>(&mut self, j: T) {
        self.max_jitter = self.max_jitter.max(j.as_f64());
    }

    pub fn into_map(self, final_rel_change: f64) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("elbo_decreases".to_string(), self.decreases as f64),
            ("max_elbo_drop".to_string(), self.max_drop),
            ("jitter_used".to_string(), self.max_jitter),
            ("final_rel_change".to_string(), final_rel_change),
        ])
    }
}

/// Runs the batch algorithm from `init` (or the prior-implied state) until the
/// relative ELBO change drops below `opts.tol` or `opts.max_iter` is reached.
pub fn fit_vmp<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    spec: &LossSpec<T>,
    opts: &FitOptions<T>,
    init: Option<VariationalState<T>>,
) -> Result<FitReport<T>> {
    let start = Instant::now();
    opts.validate()?;
    check_inputs(design, y, prior, spec)?;
    let evaluator = PsiEvaluator::new(*spec, opts.quad_order)?;
    let mut state = match init {
        Some(s) => {
            s.check(design)?;
            s
        }
        None => VariationalState::prior_init(design, prior)?,
    };

    let mut psi = psi_at(design, y, &evaluator, &state.gauss)?;
    let rbar0 = assemble_rbar(prior, &state.ig, design)?;
    let mut prev = elbo_with_rbar(design, prior, &state, psi.psi0_sum(), &rbar0)?;
    if !prev.is_finite() {
        return Err(Error::NonFiniteElbo { iteration: 0 });
    }
    let all: Vec<usize> = (0..design.n()).collect();
    // candidate state, its Ψ vectors and ELBO
    let evaluate = |next: VariationalState<T>,
                    rbar: &DMatrix<T>|
     -> Result<(VariationalState<T>, PsiVectors<T>, T)> {
        let psi = psi_at(design, y, &evaluator, &next.gauss)?;
        let value = elbo_with_rbar(design, prior, &next, psi.psi0_sum(), rbar)?;
        Ok((next, psi, value))
    };

    let mut trace = Vec::with_capacity(opts.max_iter);
    let mut secs = Vec::with_capacity(opts.max_iter);
    let mut monitor = TraceMonitor::default();
    let mut converged = false;
    let mut rel = f64::INFINITY;
    let alpha_eps = prior.a_eps + T::of_usize(design.n()) / prior.phi;
    let mut damped_steps = 0usize;
    let mut min_rho = 1.0f64;

    for it in 1..=opts.max_iter {
        let t0 = Instant::now();
        let full = vmp_sweep(design, prior, &state, &psi, opts.jitter)
            .and_then(|(next, rbar, used)| Ok((evaluate(next, &rbar)?, used)));
        let slack = T::of(1e-10) * prev.abs();
        let accept = |v: T| v.is_finite() && v >= prev - slack;
        let mut rho = T::one();
        let mut chosen = None;
        if !matches!(&full, Ok(((_, _, v), _)) if accept(*v)) {
            for _ in 0..opts.max_halvings {
                rho *= T::of(0.5);
                let cand =
                    minibatch_terms(&state, design, prior, &all, &psi, rho).and_then(|terms| {
                        let rbar = terms.rbar.clone();
                        evaluate(blend(&state, terms, rho)?, &rbar)
                    });
                if let Ok(c) = cand {
                    if accept(c.2) {
                        chosen = Some(c);
                        break;
                    }
                }
            }
        }
        let damped = chosen.is_some();
        let (next, next_psi, value) = match chosen {
            Some(c) => {
                damped_steps += 1;
                min_rho = min_rho.min(rho.as_f64());
                c
            }
            None => {
                let (c, used) = full?;
                monitor.jitter(used);
                c
            }
        };
        debug_assert!(next.ig_eps.alpha == alpha_eps);
        state = next;
        psi = next_psi;
        if !value.is_finite() {
            return Err(Error::NonFiniteElbo { iteration: it });
        }
        secs.push(t0.elapsed().as_secs_f64());
        trace.push(value);
        monitor.observe(prev, value);
        let change = relative_change(prev, value);
        rel = change.as_f64();
        prev = value;
        if change < opts.tol && !damped {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    let mut diagnostics = monitor.into_map(rel);
    diagnostics.insert("damped_steps".into(), damped_steps as f64);
    diagnostics.insert("min_step_fraction".into(), min_rho);
    Ok(FitReport {
        state,
        iterations,
        converged,
        wall_time: start.elapsed(),
        diagnostics,
        iteration_seconds: secs,
        trace_steps: (1..=iterations).collect(),
        elbo_trace: trace,
    })
}
