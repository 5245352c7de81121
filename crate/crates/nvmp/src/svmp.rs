//! Stochastic minibatch variant with Robbins-Monro averaging in natural-parameter space.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};
use crate::loss::{LossSpec, PsiEvaluator, PsiVectors};
use crate::model::{
    assemble_rbar, elbo_with_rbar, predictor_moments_rows, DesignBlocks, GaussianState,
    InvGammaState, PriorConfig, VariationalState,
};
use crate::quadrature::PRODUCTION_ORDER;
use crate::scalar::Real;
use crate::vmp::{
    check_inputs, gradient_hessian, psi_at, relative_change, update_sigma_h, FitReport,
    TraceMonitor, MAX_JITTER,
};

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticOptions<T> {
    /// Minibatch size s.
    pub minibatch: usize,
    pub rho0: T,
    pub iterations: usize,
    pub seed: u64,
    /// Full-data ELBO cadence in steps.
    pub elbo_every: usize,
    pub quad_order: usize,
}

impl<T: Real> Default for StochasticOptions<T> {
    fn default() -> Self {
        Self {
            minibatch: 100,
            rho0: T::of(0.05),
            iterations: 10_000,
            seed: 0,
            elbo_every: 100,
            quad_order: PRODUCTION_ORDER,
        }
    }
}

impl<T: Real> StochasticOptions<T> {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.minibatch == 0 || self.minibatch > n {
            return Err(Error::domain(format!(
                "minibatch size {} must lie in [1, {n}]",
                self.minibatch
            )));
        }
        if !(self.rho0 > T::zero()) {
            return Err(Error::Config(format!(
                "rho0 must be positive, got {}",
                self.rho0
            )));
        }
        if self.elbo_every == 0 {
            return Err(Error::Config("elbo_every must be at least 1".into()));
        }
        if self.quad_order == 0 {
            return Err(Error::Config("quad_order must be at least 1".into()));
        }
        Ok(())
    }
}

/// λ₁ = Σ⁻¹μ, λ₂ = −½Σ⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams<T: Real> {
    pub lambda1: DVector<T>,
    pub lambda2: DMatrix<T>,
}

impl<T: Real> NaturalParams<T> {
    pub fn from_gaussian(g: &GaussianState<T>) -> Result<Self> {
        let prec = Cholesky::factor(g.sigma())
            .map_err(|p| Error::Numerical(format!("Sigma is not positive definite (pivot {p})")))?
            .inverse();
        let lambda1 = &prec * g.mu();
        Ok(Self {
            lambda1,
            lambda2: prec * T::of(-0.5),
        })
    }

    pub fn to_gaussian(&self) -> Result<GaussianState<T>> {
        let mut prec = &self.lambda2 * T::of(-2.0);
        symmetrize(&mut prec);
        let chol = Cholesky::factor(&prec).map_err(|p| Error::Singular {
            context: "−2λ₂ is not positive definite".into(),
            jitter: 0.0,
            min_pivot: p.as_f64(),
        })?;
        GaussianState::new(chol.solve_vec(&self.lambda1), chol.inverse())
    }
}

/// ρ_t = ρ₀ / (1 + ρ₀t)^{3/4}.
pub fn learning_rate<T: Real>(t: usize, rho0: T) -> T {
    rho0 / (T::one() + rho0 * T::of_usize(t)).powf(T::of(0.75))
}

/// `s` distinct indices drawn uniformly from 0..n, in ascending order.
pub fn sample_minibatch<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<Vec<usize>> {
    if s == 0 || s > n {
        return Err(Error::domain(format!(
            "minibatch size {s} must lie in [1, {n}]"
        )));
    }
    let mut v = index::sample(rng, n, s).into_vec();
    v.sort_unstable();
    Ok(v)
}

/// The generator that draws step `t`'s minibatch.
pub fn step_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Minibatch estimate (ĝ, −Ĥ) and the blended variance factors for one step.
pub struct StepTerms<T: Real> {
    pub ig_eps: InvGammaState<T>,
    pub ig: Vec<InvGammaState<T>>,
    pub rbar: DMatrix<T>,
    pub g: DVector<T>,
    pub neg_h: DMatrix<T>,
}

/// Blended IG factors and the (n/s)-scaled gradient and Hessian on `batch`.
pub fn minibatch_terms<T: Real>(
    state: &VariationalState<T>,
    design: &DesignBlocks<T>,
    prior: &PriorConfig<T>,
    batch: &[usize],
    psi: &PsiVectors<T>,
    rho: T,
) -> Result<StepTerms<T>> {
    let n = design.n();
    let s = batch.len();
    if s == 0 || psi.psi0.len() != s {
        return Err(Error::structural("minibatch and Ψ vectors disagree"));
    }
    let scale = T::of_usize(n) / T::of_usize(s);
    let keep = T::one() - rho;
    let beta_eps =
        keep * state.ig_eps.beta + rho * (prior.b_eps + scale * psi.psi0_sum() / prior.phi);
    let ig_eps = InvGammaState::new(prior.a_eps + T::of_usize(n) / prior.phi, beta_eps)?;
    let mut ig = Vec::with_capacity(design.h());
    for h in 0..design.h() {
        let target = update_sigma_h(prior, h, &state.gauss, design)?;
        ig.push(InvGammaState::new(
            target.alpha,
            keep * state.ig[h].beta + rho * target.beta,
        )?);
    }
    let rbar = assemble_rbar(prior, &ig, design)?;
    let cs = design.c().select_rows(batch);
    let (g, neg_h) = gradient_hessian(
        &cs,
        state.gauss.mu(),
        &rbar,
        ig_eps.gamma(),
        prior.phi,
        &psi.psi1,
        &psi.psi2,
        scale,
    )?;
    Ok(StepTerms {
        ig_eps,
        ig,
        rbar,
        g,
        neg_h,
    })
}

fn batch_psi<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    evaluator: &PsiEvaluator<T>,
    gauss: &GaussianState<T>,
    batch: &[usize],
) -> Result<PsiVectors<T>> {
    let pm = predictor_moments_rows(design, gauss, batch)?;
    let yb: Vec<T> = batch.iter().map(|&i| y[i]).collect();
    evaluator.vectors(&yb, &pm.m, &pm.v2, None)
}

/// One stochastic step with learning rate `rho`.
pub fn svmp_step<T: Real>(
    state: &VariationalState<T>,
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    evaluator: &PsiEvaluator<T>,
    batch: &[usize],
    rho: T,
) -> Result<VariationalState<T>> {
    if !(rho >= T::zero() && rho <= T::one()) {
        return Err(Error::domain(format!(
            "learning rate must lie in [0, 1], got {rho}"
        )));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= design.n()) {
        return Err(Error::structural(format!(
            "minibatch index {bad} out of range"
        )));
    }
    let psi = batch_psi(design, y, evaluator, &state.gauss, batch)?;
    let terms = minibatch_terms(state, design, prior, batch, &psi, rho)?;
    blend(state, terms, rho)
}

/// Moves the Gaussian factor a fraction `rho` of the way to the Newton target
/// in natural-parameter space.
pub(crate) fn blend<T: Real>(
    state: &VariationalState<T>,
    terms: StepTerms<T>,
    rho: T,
) -> Result<VariationalState<T>> {
    let nat = NaturalParams::from_gaussian(&state.gauss)?;
    let keep = T::one() - rho;
    let target1 = &terms.g + &terms.neg_h * state.gauss.mu();
    let lambda1 = &nat.lambda1 * keep + target1 * rho;
    let mut lambda2 = &nat.lambda2 * keep - &terms.neg_h * (rho * T::of(0.5));
    symmetrize(&mut lambda2);
    let gauss = blended_gaussian(&lambda1, &lambda2)?;
    Ok(VariationalState {
        gauss,
        ig_eps: terms.ig_eps,
        ig: terms.ig,
    })
}

fn blended_gaussian<T: Real>(
    lambda1: &DVector<T>,
    lambda2: &DMatrix<T>,
) -> Result<GaussianState<T>> {
    let prec = lambda2 * T::of(-2.0);
    let (chol, _) = Cholesky::factor_jittered(
        &prec,
        T::of(1e-10),
        T::of(MAX_JITTER),
        "blended precision −2λ₂",
    )?;
    GaussianState::new(chol.solve_vec(lambda1), chol.inverse())
}

/// Runs exactly `opts.iterations` stochastic steps, recording the full-data
/// ELBO every `opts.elbo_every` steps and after the last one.
pub fn fit_svmp<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    spec: &LossSpec<T>,
    opts: &StochasticOptions<T>,
    init: Option<VariationalState<T>>,
) -> Result<FitReport<T>> {
    let start = Instant::now();
    check_inputs(design, y, prior, spec)?;
    opts.validate(design.n())?;
    let evaluator = PsiEvaluator::new(*spec, opts.quad_order)?;
    let mut state = match init {
        Some(s) => {
            s.check(design)?;
            s
        }
        None => VariationalState::prior_init(design, prior)?,
    };
    let full_elbo = |st: &VariationalState<T>| -> Result<T> {
        let psi = psi_at(design, y, &evaluator, &st.gauss)?;
        let rbar = assemble_rbar(prior, &st.ig, design)?;
        elbo_with_rbar(design, prior, st, psi.psi0_sum(), &rbar)
    };

    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut secs = Vec::with_capacity(opts.iterations);
    let mut monitor = TraceMonitor::default();
    let mut prev: Option<T> = None;
    let mut rel = f64::NAN;
    for t in 0..opts.iterations {
        let t0 = Instant::now();
        let batch = sample_minibatch(design.n(), opts.minibatch, &mut step_rng(opts.seed, t))?;
        state = svmp_step(
            &state,
            design,
            y,
            prior,
            &evaluator,
            &batch,
            learning_rate(t, opts.rho0),
        )?;
        secs.push(t0.elapsed().as_secs_f64());
        let step = t + 1;
        if step % opts.elbo_every == 0 || step == opts.iterations {
            let value = full_elbo(&state)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteElbo { iteration: step });
            }
            if let Some(p) = prev {
                monitor.observe(p, value);
                rel = relative_change(p, value).as_f64();
            }
            prev = Some(value);
            trace.push(value);
            steps.push(step);
        }
    }

    Ok(FitReport {
        state,
        iterations: opts.iterations,
        converged: true,
        wall_time: start.elapsed(),
        diagnostics: monitor.into_map(rel),
        iteration_seconds: secs,
        trace_steps: steps,
        elbo_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(learning_rate(0, 0.05), 0.05);
        assert!((learning_rate(1, 1.0_f64) - 0.594_603_557_501_360_5).abs() < 1e-15);
        assert!(learning_rate(1_000_000_000, 0.05) < 1e-5);
        assert!(learning_rate(11, 0.05) < learning_rate(10, 0.05));
    }

    #[test]
    fn minibatch_examples() {
        let mut rng = step_rng(3, 0);
        assert_eq!(
            sample_minibatch(5, 5, &mut rng).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(sample_minibatch(1, 1, &mut rng).unwrap(), vec![0]);
        let a = sample_minibatch(10, 3, &mut step_rng(9, 4)).unwrap();
        let b = sample_minibatch(10, 3, &mut step_rng(9, 4)).unwrap();
        assert_eq!(a, b);
        assert!(sample_minibatch(3, 4, &mut rng).is_err());
    }

    #[test]
    fn natural_round_trip() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = GaussianState::new(DVector::from_vec(vec![0.5, -1.0]), s).unwrap();
        let back = NaturalParams::from_gaussian(&g)
            .unwrap()
            .to_gaussian()
            .unwrap();
        assert!((back.mu() - g.mu()).abs().max() < 1e-14);
        assert!((back.sigma() - g.sigma()).abs().max() < 1e-14);
    }

    #[test]
    fn zero_rate_keeps_state() {
        let x = DMatrix::<f64>::from_element(4, 1, 1.0);
        let d = DesignBlocks::new(x, vec![], None, vec![]).unwrap();
        let prior = PriorConfig::uniform(10.0, 2.0001, 1.0001, 1.0, 0);
        let spec = LossSpec::quantile(0.3).unwrap();
        let ev = PsiEvaluator::new(spec, 31).unwrap();
        let y = [0.1, 0.4, -0.3, 2.0];
        let s0 = VariationalState::prior_init(&d, &prior).unwrap();
        let s1 = svmp_step(&s0, &d, &y, &prior, &ev, &[1, 3], 0.0).unwrap();
        assert!((s1.gauss.mu() - s0.gauss.mu()).abs().max() < 1e-14);
        assert!((s1.gauss.sigma() - s0.gauss.sigma()).abs().max() < 1e-14);
        assert_eq!(s1.ig_eps.beta, s0.ig_eps.beta);
    }

    #[test]
    fn two_observation_scaling_by_hand() {
        // n = 2, s = 1: the single observation enters with weight n/s = 2
        let c = DMatrix::<f64>::from_row_slice(2, 1, &[1.0, 3.0]);
        let d = DesignBlocks::new(c, vec![], None, vec![]).unwrap();
        let prior = PriorConfig::uniform(1.0, 2.0, 1.0, 1.0, 0);
        let state = VariationalState::prior_init(&d, &prior).unwrap();
        let psi = PsiVectors {
            psi0: vec![0.7],
            psi1: vec![-0.2],
            psi2: vec![0.4],
        };
        let t = minibatch_terms(&state, &d, &prior, &[1], &psi, 1.0).unwrap();
        // β_ε = 1 + 2·0.7 = 2.4, α_ε = 2 + 2 = 4, γ_ε = 4/2.4
        assert!((t.ig_eps.beta - 2.4).abs() < 1e-15);
        let ge = 4.0 / 2.4;
        assert!((t.g[0] - 2.0 * ge * 3.0 * 0.2).abs() < 1e-14);
        assert!((t.neg_h[(0, 0)] - (1.0 + 2.0 * ge * 9.0 * 0.4)).abs() < 1e-13);
    }
}
