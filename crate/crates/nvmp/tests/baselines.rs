mod common;

use common::{quantile_dataset, sim_prior};
use nalgebra::DMatrix;
use nvmp::baselines::kde::{kde_with_bandwidth, silverman_bandwidth};
use nvmp::baselines::rwm::{parameter_names, scales_from_state};
use nvmp::{
    accuracy_score, fit_mfvb_quantile, fit_vmp, gig_half_moments, kde_density, rwm_sample,
    DesignBlocks, FitOptions, LossSpec, Marginal, PriorConfig, RwmOptions,
};
use nvmp_testkit::{assert_close, integrate, log_integral, normal_density};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_draws(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[test]
fn gig_moments_match_log_scale_integration() {
    let grid = [1e-3_f64, 1e-1, 1.0, 10.0, 1e3];
    for &a in &grid {
        for &b in &grid {
            // v = e^t; density ∝ v^{−1/2} exp{−(av + b/v)/2}, dv = v dt
            let lo = b.ln() - 12.0;
            let hi = -a.ln() + 12.0;
            let kernel = |t: f64, k: f64| (0.5 + k) * t - 0.5 * (a * t.exp() + b * (-t).exp());
            let z0 = log_integral(|t| kernel(t, 0.0), lo, hi, 1e-13);
            let mean = (log_integral(|t| kernel(t, 1.0), lo, hi, 1e-13) - z0).exp();
            let inv = (log_integral(|t| kernel(t, -1.0), lo, hi, 1e-13) - z0).exp();
            let (m, w) = gig_half_moments(a, b).unwrap();
            assert_close(m, mean, 1e-8, 0.0, &format!("E v at a={a}, b={b}"));
            assert_close(w, inv, 1e-8, 0.0, &format!("E 1/v at a={a}, b={b}"));
            assert!(m * w >= 1.0);
        }
    }
    assert!(gig_half_moments(0.0, 1.0).is_err());
    assert!(gig_half_moments(1.0, f64::NAN).is_err());
}

#[test]
fn mfvb_increases_its_bound_and_satisfies_jensen() {
    let prior = sim_prior(1);
    for (tau, seed) in [(0.9, 1), (0.5, 2), (0.2, 3)] {
        let ds = quantile_dataset(300, 6, seed);
        let fit =
            fit_mfvb_quantile(&ds.design, &ds.y, &prior, tau, &FitOptions::default()).unwrap();
        let rep = &fit.report;
        assert!(rep.converged, "tau {tau}");
        for w in rep.elbo_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-10 * w[0].abs(),
                "tau {tau}: {} then {}",
                w[0],
                w[1]
            );
        }
        for &(ev, einv) in &fit.augmented.omega_moments {
            assert!(ev > 0.0 && ev * einv >= 1.0 - 1e-12);
        }
        assert_eq!(fit.augmented.omega_moments.len(), ds.n());
    }
}

#[test]
fn mfvb_is_deterministic() {
    let ds = quantile_dataset(150, 4, 8);
    let prior = sim_prior(1);
    let a = fit_mfvb_quantile(&ds.design, &ds.y, &prior, 0.7, &FitOptions::default()).unwrap();
    let b = fit_mfvb_quantile(&ds.design, &ds.y, &prior, 0.7, &FitOptions::default()).unwrap();
    assert_eq!(a.report.elbo_trace, b.report.elbo_trace);
    assert_eq!(a.augmented, b.augmented);
}

#[test]
fn median_fits_agree_with_vmp_and_sit_below_its_bound() {
    let prior = sim_prior(1);
    let spec = LossSpec::quantile(0.5).unwrap();
    for seed in 0..4 {
        let ds = quantile_dataset(400, 8, seed);
        let vmp = fit_vmp(
            &ds.design,
            &ds.y,
            &prior,
            &spec,
            &FitOptions::default(),
            None,
        )
        .unwrap();
        let mfvb =
            fit_mfvb_quantile(&ds.design, &ds.y, &prior, 0.5, &FitOptions::default()).unwrap();
        let (qv, qm) = (&vmp.state.gauss, &mfvb.augmented.gauss);
        for j in 0..qv.dim() {
            let sd = qv.sigma()[(j, j)].sqrt();
            assert!(
                (qv.mu()[j] - qm.mu()[j]).abs() <= 3.0 * sd,
                "seed {seed} coordinate {j}"
            );
        }
        let (ev, em) = (vmp.final_elbo().unwrap(), mfvb.report.final_elbo().unwrap());
        assert!(
            ev >= em - 1e-6 * ev.abs(),
            "seed {seed}: VMP {ev} MFVB {em}"
        );
    }
}

#[test]
fn mfvb_rejects_invalid_tau() {
    let ds = quantile_dataset(20, 2, 0);
    let prior = sim_prior(1);
    for tau in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(fit_mfvb_quantile(&ds.design, &ds.y, &prior, tau, &FitOptions::default()).is_err());
    }
}

/// Batch-means standard error of a chain average.
fn batch_se(x: &[f64], batches: usize) -> f64 {
    let len = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[test]
fn rwm_recovers_a_one_dimensional_posterior_mean() {
    // intercept-only expectile-0.5 model; σ_ε² integrates out in closed form:
    // π(β | y) ∝ N(β; 0, σβ²) (B + S(β)/φ)^{−(A + n/φ)}, S(β) = Σ (y_i − β)²/4
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 30;
    let y: Vec<f64> = (0..n)
        .map(|_| 1.2 + 0.8 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let design = DesignBlocks::new(DMatrix::from_element(n, 1, 1.0), vec![], None, vec![]).unwrap();
    let prior = PriorConfig::uniform(100.0, 2.0001, 1.0001, 1.0, 0);
    let spec = LossSpec::expectile(0.5).unwrap();
    let shape = prior.a_eps + n as f64 / prior.phi;
    let log_post = |b: f64| {
        let s: f64 = y.iter().map(|v| (v - b).powi(2) / 4.0).sum();
        -b * b / (2.0 * prior.sigma2_beta) - shape * (prior.b_eps + s / prior.phi).ln()
    };
    let (lo, hi) = (-4.0, 6.0);
    let z = log_integral(log_post, lo, hi, 1e-12);
    let mean = integrate(&mut |b: f64| b * (log_post(b) - z).exp(), lo, hi, 1e-12);

    let opts = RwmOptions {
        draws: 20_000,
        burn: 2_000,
        step_scale: 0.5,
        seed: 3,
        ..Default::default()
    };
    let draws = rwm_sample(&design, &y, &prior, &spec, &opts).unwrap();
    assert_eq!(draws.param_names, parameter_names(&design));
    assert!(draws.acceptance_rate > 0.05 && draws.acceptance_rate < 0.95);
    let chain = draws.column(0);
    let got = chain.iter().sum::<f64>() / chain.len() as f64;
    let se = batch_se(&chain, 50);
    assert!(
        (got - mean).abs() <= 3.0 * se,
        "chain mean {got}, oracle {mean}, se {se}"
    );
}

#[test]
fn rwm_output_shape_and_failure_modes() {
    let ds = quantile_dataset(60, 3, 2);
    let prior = sim_prior(1);
    let spec = LossSpec::quantile(0.5).unwrap();
    let vmp = fit_vmp(
        &ds.design,
        &ds.y,
        &prior,
        &spec,
        &FitOptions::default(),
        None,
    )
    .unwrap();
    let (scales, init) = scales_from_state(&vmp.state);
    let opts = RwmOptions {
        draws: 300,
        burn: 100,
        thin: 2,
        scales: Some(scales),
        init: Some(init),
        ..Default::default()
    };
    let a = rwm_sample(&ds.design, &ds.y, &prior, &spec, &opts).unwrap();
    assert_eq!(a.samples.nrows(), 300);
    assert_eq!(a.samples.ncols(), 2 + 3 + 2);
    assert!(a.samples.iter().all(|v| v.is_finite()));
    assert!((0.0..=1.0).contains(&a.acceptance_rate));
    let b = rwm_sample(&ds.design, &ds.y, &prior, &spec, &opts).unwrap();
    assert_eq!(a.samples, b.samples);

    let tiny = RwmOptions {
        draws: 200,
        burn: 0,
        step_scale: 1e-9,
        adapt: false,
        ..opts.clone()
    };
    assert!(
        rwm_sample(&ds.design, &ds.y, &prior, &spec, &tiny)
            .unwrap()
            .acceptance_rate
            > 0.99
    );
    let bad_init = RwmOptions {
        init: Some(vec![f64::NAN; 7]),
        ..opts.clone()
    };
    assert!(rwm_sample(&ds.design, &ds.y, &prior, &spec, &bad_init).is_err());
    let short = RwmOptions {
        init: Some(vec![0.0; 3]),
        ..opts
    };
    assert!(rwm_sample(&ds.design, &ds.y, &prior, &spec, &short).is_err());
}

#[test]
fn kde_of_a_large_normal_sample_tracks_the_density() {
    let x = normal_draws(100_000, 0.0, 1.0, 1);
    let grid: Vec<f64> = (0..=160).map(|i| -4.0 + 0.05 * i as f64).collect();
    let f = kde_density(&x, &grid).unwrap();
    let worst = grid
        .iter()
        .zip(&f)
        .map(|(g, v)| (v - normal_density(*g, 0.0, 1.0)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.02, "max deviation {worst}");
}

#[test]
fn kde_integrates_to_one_and_respects_reflection_and_shift() {
    let x = normal_draws(400, 0.5, 2.0, 2);
    let grid: Vec<f64> = (0..=4000).map(|i| -20.0 + 0.01 * i as f64).collect();
    let f = kde_density(&x, &grid).unwrap();
    assert!(f.iter().all(|v| *v >= 0.0));
    let total = nvmp::baselines::kde::trapezoid(&grid, &f);
    assert!((total - 1.0).abs() <= 1e-3, "mass {total}");

    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let neg_grid: Vec<f64> = grid.iter().rev().map(|g| -g).collect();
    let fr = kde_density(&neg, &neg_grid).unwrap();
    for (a, b) in f.iter().zip(fr.iter().rev()) {
        assert!((a - b).abs() <= 1e-12);
    }
    let h = silverman_bandwidth(&x).unwrap();
    let shifted: Vec<f64> = x.iter().map(|v| v + 3.0).collect();
    let shifted_grid: Vec<f64> = grid.iter().map(|g| g + 3.0).collect();
    let fs = kde_with_bandwidth(&shifted, &shifted_grid, h).unwrap();
    for (a, b) in f.iter().zip(&fs) {
        assert!((a - b).abs() <= 1e-10);
    }
    assert!(kde_density(&[1.0], &grid).is_err());
}

#[test]
fn accuracy_score_edge_cases_and_invariances() {
    let x = normal_draws(20_000, 1.0, 0.5, 3);
    let q = Marginal::Gaussian { mean: 1.0, sd: 0.5 };
    let own = accuracy_score(&q, &x).unwrap();
    assert!(own >= 97.0, "self accuracy {own}");

    let far = normal_draws(2_000, 100.0, 1.0, 4);
    let gap = accuracy_score(&Marginal::Gaussian { mean: 0.0, sd: 1.0 }, &far).unwrap();
    assert!(gap <= 0.01, "disjoint accuracy {gap}");

    let y = normal_draws(5_000, 0.3, 1.2, 5);
    let base = accuracy_score(&Marginal::Gaussian { mean: 0.0, sd: 1.0 }, &y).unwrap();
    let (a, b) = (3.5, -2.0);
    let moved: Vec<f64> = y.iter().map(|v| a * v + b).collect();
    let image = accuracy_score(&Marginal::Gaussian { mean: b, sd: a }, &moved).unwrap();
    assert!((base - image).abs() <= 1e-6, "{base} vs {image}");

    let z = normal_draws(5_000, 0.0, 1.0, 6);
    let swapped = accuracy_score(&Marginal::Gaussian { mean: 0.3, sd: 1.2 }, &z).unwrap();
    assert!((base - swapped).abs() <= 2.0, "{base} vs {swapped}");
    assert!((0.0..=100.0).contains(&base));
}

#[test]
fn log_inverse_gamma_marginal_matches_its_moments() {
    let m = Marginal::LogInvGamma {
        alpha: 7.5,
        beta: 3.0,
    };
    let (lo, hi) = (-8.0, 6.0);
    let mass = integrate(&mut |x| m.pdf(x), lo, hi, 1e-13);
    let mean = integrate(&mut |x| x * m.pdf(x), lo, hi, 1e-13);
    let var = integrate(&mut |x| (x - mean).powi(2) * m.pdf(x), lo, hi, 1e-13);
    assert_close(mass, 1.0, 1e-10, 0.0, "mass");
    assert_close(m.mean(), mean, 1e-10, 1.0, "mean");
    assert_close(m.sd(), var.sqrt(), 1e-9, 0.0, "sd");
}
