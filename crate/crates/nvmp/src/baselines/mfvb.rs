//! Conjugate mean-field VB for quantile regression on the exponential-normal
//! mixture representation of the tempered check-loss likelihood.
//!
//! With s = φσ_ε², θ = (1−2τ)/(τ(1−τ)) and ψ² = 2/(τ(1−τ)),
//!
//!   (σ²)^{−1/φ} exp{−ρ_τ(r)/(φσ²)} = c (σ²)^{1−1/φ} ∫ N(r; θv, ψ²sv) Exp(v; mean s) dv
//!
//! with c = φ/(τ(1−τ)), so the augmented model bounds the same evidence as the
//! non-augmented generalized posterior.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::model::{
    assemble_rbar, kl_gaussian_to_prior, kl_invgamma, predictor_moments, DesignBlocks,
    GaussianState, InvGammaState, PriorConfig, VariationalState,
};
use crate::scalar::Real;
use crate::vmp::{
    relative_change, update_sigma_h, FitOptions, FitReport, TraceMonitor, MAX_JITTER,
};

/// Variational state of the augmented model.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState<T: Real> {
    pub gauss: GaussianState<T>,
    pub ig_eps: InvGammaState<T>,
    pub ig: Vec<InvGammaState<T>>,
    /// (E v_i, E 1/v_i) per observation.
    pub omega_moments: Vec<(T, T)>,
    /// GIG(½, a_i, b_i) parameters of q(v_i).
    pub omega_params: Vec<(T, T)>,
}

impl<T: Real> AugmentedState<T> {
    pub fn variational(&self) -> VariationalState<T> {
        VariationalState {
            gauss: self.gauss.clone(),
            ig_eps: self.ig_eps,
            ig: self.ig.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MfvbFit<T: Real> {
    pub report: FitReport<T>,
    pub augmented: AugmentedState<T>,
}

/// Mean and inverse mean of GIG(½, a, b), density ∝ v^{−1/2} exp{−(av + b/v)/2}.
pub fn gig_half_moments<T: Real>(a: T, b: T) -> Result<(T, T)> {
    if !(a > T::zero() && b > T::zero() && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!(
            "GIG parameters must be positive, got a={a}, b={b}"
        )));
    }
    let z = (a * b).sqrt();
    Ok(((b / a).sqrt() * (T::one() + z.recip()), (a / b).sqrt()))
}

struct Constants<T> {
    theta: T,
    psi2: T,
    tt: T,
    phi: T,
}

impl<T: Real> Constants<T> {
    fn new(tau: T, phi: T) -> Self {
        let tt = tau * (T::one() - tau);
        Self {
            theta: (T::one() - T::of(2.0) * tau) / tt,
            psi2: T::of(2.0) / tt,
            tt,
            phi,
        }
    }
}

/// Per-observation residual moments E r and E r².
fn residual_moments<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    gauss: &GaussianState<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let pm = predictor_moments(design, gauss)?;
    let er: Vec<T> = y.iter().zip(&pm.m).map(|(y, m)| *y - *m).collect();
    let er2 = er.iter().zip(&pm.v2).map(|(r, v)| *r * *r + *v).collect();
    Ok((er, er2))
}

/// GIG parameters (a, b) of q(v_i).
fn gig_params<T: Real>(k: &Constants<T>, gamma: T, er2: T) -> (T, T) {
    let g = gamma / k.phi;
    let floor = T::min_positive_value().sqrt();
    (
        g / (T::of(2.0) * k.tt),
        (g * er2 * k.tt / T::of(2.0)).max(floor),
    )
}

/// The bracket (E[r²]E[1/v] − 2θE r + θ²E v)/(2ψ²) + E v.
fn bracket<T: Real>(k: &Constants<T>, er: T, er2: T, ev: T, ew: T) -> T {
    (er2 * ew - T::of(2.0) * k.theta * er + k.theta * k.theta * ev) / (T::of(2.0) * k.psi2) + ev
}

/// Augmented-model ELBO.
fn augmented_elbo<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    k: &Constants<T>,
    st: &AugmentedState<T>,
) -> Result<T> {
    let (er, er2) = residual_moments(design, y, &st.gauss)?;
    let gamma = st.ig_eps.gamma();
    let el = st.ig_eps.mean_log();
    let half = T::of(0.5);
    let two = T::of(2.0);
    let pi = T::PI();
    let log_c = (k.phi / k.tt).ln();
    let base =
        log_c - half * (two * pi * k.psi2 * k.phi).ln() - k.phi.ln() - (half + k.phi.recip()) * el;
    let mut obs = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let (ev, ew) = st.omega_moments[i];
        let (a, b) = st.omega_params[i];
        let z = (a * b).sqrt();
        let log_z = two.ln() + T::of(0.25) * (b / a).ln() + half * (pi / (two * z)).ln() - z;
        obs.push(
            base - gamma / k.phi * bracket(k, er[i], er2[i], ev, ew)
                + log_z
                + half * (a * ev + b * ew),
        );
    }
    let rbar = assemble_rbar(prior, &st.ig, design)?;
    let mut v = crate::loss::pairwise_sum(&obs)
        + kl_gaussian_to_prior(&st.gauss, &rbar, prior, &st.ig, design)?;
    v += kl_invgamma(
        &st.ig_eps,
        prior.a_eps,
        prior.b_eps,
        (st.ig_eps.alpha - prior.a_eps).max(T::zero()),
    )?;
    for (h, q) in st.ig.iter().enumerate() {
        v += kl_invgamma(
            q,
            prior.a[h],
            prior.b[h],
            (q.alpha - prior.a[h]).max(T::zero()),
        )?;
    }
    Ok(v)
}

/// Coordinate ascent over q(v), q(σ_ε²), q(σ_h²), q(β, u), in that order.
pub fn fit_mfvb_quantile<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    tau: T,
    opts: &FitOptions<T>,
) -> Result<MfvbFit<T>> {
    let start = Instant::now();
    opts.validate()?;
    if !(tau > T::zero() && tau < T::one()) {
        return Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    if y.len() != design.n() {
        return Err(Error::structural(format!(
            "{} responses for {} design rows",
            y.len(),
            design.n()
        )));
    }
    prior.validate(design)?;
    let k = Constants::new(tau, prior.phi);
    let n = design.n();
    let init = VariationalState::prior_init(design, prior)?;
    let mut st = AugmentedState {
        gauss: init.gauss,
        ig_eps: init.ig_eps,
        ig: init.ig,
        omega_moments: vec![(T::one(), T::one()); n],
        omega_params: vec![(T::one(), T::one()); n],
    };
    let alpha_eps = prior.a_eps + T::of_usize(n) * (T::of(0.5) + prior.phi.recip());
    let c = design.c();

    let mut prev: Option<T> = None;
    let mut trace = Vec::new();
    let mut secs = Vec::new();
    let mut monitor = TraceMonitor::default();
    let mut converged = false;
    let mut rel = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let t0 = Instant::now();
        // q(v)
        let (er, er2) = residual_moments(design, y, &st.gauss)?;
        let gamma = st.ig_eps.gamma();
        for i in 0..n {
            let (a, b) = gig_params(&k, gamma, er2[i]);
            st.omega_params[i] = (a, b);
            st.omega_moments[i] = gig_half_moments(a, b)?;
        }
        // q(σ_ε²)
        let mass: Vec<T> = (0..n)
            .map(|i| {
                bracket(
                    &k,
                    er[i],
                    er2[i],
                    st.omega_moments[i].0,
                    st.omega_moments[i].1,
                )
            })
            .collect();
        st.ig_eps = InvGammaState::new(
            alpha_eps,
            prior.b_eps + crate::loss::pairwise_sum(&mass) / prior.phi,
        )?;
        // q(σ_h²)
        st.ig = (0..design.h())
            .map(|h| update_sigma_h(prior, h, &st.gauss, design))
            .collect::<Result<_>>()?;
        // q(β, u)
        let rbar = assemble_rbar(prior, &st.ig, design)?;
        let scale = st.ig_eps.gamma() / (prior.phi * k.psi2);
        let mut weighted = c.clone();
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let (_, ew) = st.omega_moments[i];
            let wi = scale * ew;
            let mut row = weighted.row_mut(i);
            row *= wi;
            rhs[i] = wi * (y[i] - k.theta / ew);
        }
        let mut prec: DMatrix<T> = c.tr_mul(&weighted) + &rbar;
        crate::linalg::symmetrize(&mut prec);
        let (chol, used) =
            Cholesky::factor_jittered(&prec, opts.jitter, T::of(MAX_JITTER), "MFVB precision")?;
        monitor.jitter(used);
        let mu = chol.solve_vec(&c.tr_mul(&rhs));
        st.gauss = GaussianState::new(mu, chol.inverse())?;

        let value = augmented_elbo(design, y, prior, &k, &st)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteElbo { iteration: it });
        }
        secs.push(t0.elapsed().as_secs_f64());
        trace.push(value);
        if let Some(p) = prev {
            monitor.observe(p, value);
            let change = relative_change(p, value);
            rel = change.as_f64();
            if change < opts.tol {
                converged = true;
                break;
            }
        }
        prev = Some(value);
    }
    let iterations = trace.len();
    Ok(MfvbFit {
        report: FitReport {
            state: st.variational(),
            iterations,
            converged,
            wall_time: start.elapsed(),
            diagnostics: monitor.into_map(rel),
            iteration_seconds: secs,
            trace_steps: (1..=iterations).collect(),
            elbo_trace: trace,
        },
        augmented: st,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gig_examples() {
        let (m, w) = gig_half_moments(1.0_f64, 1.0).unwrap();
        assert!((m - 2.0).abs() < 1e-15 && (w - 1.0).abs() < 1e-15);
        let (_, w) = gig_half_moments(4.0_f64, 1.0).unwrap();
        assert!((w - 2.0).abs() < 1e-15);
        let (m, w) = gig_half_moments(0.3_f64, 7.0).unwrap();
        assert!((m * w - (1.0 + 1.0 / 2.1_f64.sqrt())).abs() < 1e-14);
        assert!(gig_half_moments(0.0_f64, 1.0).is_err());
    }
}
