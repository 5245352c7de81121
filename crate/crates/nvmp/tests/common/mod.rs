#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nvmp::vmp::gradient_hessian;
use nvmp::{
    elbo, psi_triple, simulate, Dataset, DesignBlocks, GaussianState, InvGammaState, LossFamily,
    LossSpec, PriorConfig, SimConfig, SimFamily, VariationalState,
};
use nvmp_testkit::{integrate_pieces, normal_density};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// One representative of each loss family.
pub fn family_specs() -> Vec<LossSpec<f64>> {
    vec![
        LossSpec::quantile(0.3).unwrap(),
        LossSpec::expectile(0.7).unwrap(),
        LossSpec::huber_regression(0.5).unwrap(),
        LossSpec::huber_classification(0.5).unwrap(),
        LossSpec::svr(0.3).unwrap(),
        LossSpec::svc(),
        LossSpec::logistic(),
    ]
}

pub fn draw_response(spec: &LossSpec<f64>, rng: &mut ChaCha8Rng) -> f64 {
    match spec.family() {
        LossFamily::Svc | LossFamily::HuberClassification => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        LossFamily::Logistic => f64::from(u8::from(rng.random::<bool>())),
        _ => rng.sample::<f64, _>(StandardNormal) * 1.5,
    }
}

pub struct Instance {
    pub design: DesignBlocks<f64>,
    pub y: Vec<f64>,
    pub prior: PriorConfig<f64>,
    pub state: VariationalState<f64>,
}

/// n ∈ [5, 20], X = [1, x], three one-hot groups (d_* = 5), random μ, Σ and
/// variance factors with α_ε = A_ε + n/φ.
pub fn random_instance(spec: &LossSpec<f64>, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=20);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { normal() });
    let z = DMatrix::from_fn(n, 3, |i, j| if i % 3 == j { 1.0 } else { 0.0 });
    let design = DesignBlocks::new(x, vec![z], None, vec![None]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y = (0..n).map(|_| draw_response(spec, &mut rng)).collect();
    let phi = if rng.random::<bool>() { 1.0 } else { 1.5 };
    let prior = PriorConfig::uniform(10.0, 2.0001, 1.0001, phi, 1);
    let l = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.2);
    let sigma = &l * l.transpose() + DMatrix::identity(5, 5) * 0.05;
    let mu = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.7);
    let ig_eps = InvGammaState::new(2.0001 + n as f64 / phi, rng.random_range(0.5..5.0)).unwrap();
    let ig = vec![InvGammaState::new(3.5001, rng.random_range(0.5..3.0)).unwrap()];
    let state = VariationalState {
        gauss: GaussianState::new(mu, sigma).unwrap(),
        ig_eps,
        ig,
    };
    Instance {
        design,
        y,
        prior,
        state,
    }
}

/// The ELBO as a function of μ, with Σ and the variance factors held fixed.
pub fn elbo_at_mu(inst: &Instance, spec: &LossSpec<f64>, mu: &DVector<f64>) -> f64 {
    let gauss = GaussianState::new(mu.clone(), inst.state.gauss.sigma().clone()).unwrap();
    let c = inst.design.c();
    let psi0: Vec<f64> = (0..inst.design.n())
        .map(|i| {
            let ci = c.row(i).transpose();
            let m = ci.dot(mu);
            let nu = (gauss.sigma() * &ci).dot(&ci).sqrt();
            psi_triple(spec, inst.y[i], m, nu).unwrap().psi0
        })
        .collect();
    let state = VariationalState {
        gauss,
        ..inst.state.clone()
    };
    elbo(&inst.design, &inst.prior, &state, &psi0).unwrap()
}

/// Relative max-norm errors of the analytic gradient and Hessian against
/// central differences of the ELBO in μ.
pub fn derivative_errors(inst: &Instance, spec: &LossSpec<f64>) -> (f64, f64) {
    let d = inst.design.d_star();
    let mu = inst.state.gauss.mu().clone();
    let c = inst.design.c();
    let mut psi1 = Vec::new();
    let mut psi2 = Vec::new();
    for i in 0..inst.design.n() {
        let ci = c.row(i).transpose();
        let nu = (inst.state.gauss.sigma() * &ci).dot(&ci).sqrt();
        let t = psi_triple(spec, inst.y[i], ci.dot(&mu), nu).unwrap();
        psi1.push(t.psi1);
        psi2.push(t.psi2);
    }
    let rbar = nvmp::assemble_rbar(&inst.prior, &inst.state.ig, &inst.design).unwrap();
    let (g, neg_h) = gradient_hessian(
        c,
        &mu,
        &rbar,
        inst.state.ig_eps.gamma(),
        inst.prior.phi,
        &psi1,
        &psi2,
        1.0,
    )
    .unwrap();

    let f = |v: &DVector<f64>| elbo_at_mu(inst, spec, v);
    let e = |j: usize| DVector::from_fn(d, |k, _| if k == j { 1.0 } else { 0.0 });
    let h = 1e-5;
    let g_num = DVector::from_fn(d, |j, _| {
        (f(&(&mu + e(j) * h)) - f(&(&mu - e(j) * h))) / (2.0 * h)
    });
    let hh = 1e-3;
    let h_num = DMatrix::from_fn(d, d, |j, k| {
        let (ej, ek) = (e(j) * hh, e(k) * hh);
        (f(&(&mu + &ej + &ek)) - f(&(&mu + &ej - &ek)) - f(&(&mu - &ej + &ek))
            + f(&(&mu - &ej - &ek)))
            / (4.0 * hh * hh)
    });
    let g_err = (&g_num - &g).amax() / g.amax().max(1e-300);
    let h_err = (&h_num + &neg_h).amax() / neg_h.amax();
    (g_err, h_err)
}

/// The heteroscedastic random-intercept dataset used by the engine checks.
pub fn quantile_dataset(n: usize, d: usize, seed: u64) -> Dataset<f64> {
    simulate(&SimConfig::new(
        SimFamily::HeteroscedasticGaussian,
        n,
        d,
        seed,
    ))
    .unwrap()
}

/// Prior used with simulated data.
pub fn sim_prior(h: usize) -> PriorConfig<f64> {
    PriorConfig::uniform(1e4, 2.0001, 1.0001, 1.0, h)
}

/// ∫_a^b x^k N(x; µ, ν²) dx with infinite ends clipped at µ ± 40ν; tol 0 asks
/// for convergence to roundoff relative to the integral itself.
pub fn moment_oracle(k: i32, a: f64, b: f64, mu: f64, nu: f64) -> f64 {
    let lo = a.max(mu - 40.0 * nu);
    let hi = b.min(mu + 40.0 * nu);
    if lo >= hi {
        return 0.0;
    }
    let breaks: Vec<f64> = (-40..=40)
        .map(|j| mu + f64::from(j) * nu)
        .chain([0.0])
        .collect();
    let mut f = |x: f64| x.powi(k) * normal_density(x, mu, nu);
    integrate_pieces(&mut f, lo, hi, &breaks, 0.0)
}
