mod common;

use common::moment_oracle as oracle;
use nvmp::gauss::{
    abs_moment, dirac_moment, interval_prob, normal_cdf, sign_moment, trunc_moment1, trunc_moment2,
    ScalarGaussian,
};
use nvmp_testkit::{assert_close, integrate_pieces, normal_density};
use proptest::prelude::*;

const MUS: [f64; 7] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
const NUS: [f64; 3] = [0.1, 1.0, 10.0];
const INTERVALS: [(f64, f64); 4] = [
    (f64::NEG_INFINITY, 0.0),
    (0.0, f64::INFINITY),
    (-1.0, 1.0),
    (f64::NEG_INFINITY, f64::INFINITY),
];

#[test]
fn identities_match_numeric_integration() {
    for &mu in &MUS {
        for &nu in &NUS {
            let g = ScalarGaussian::new(mu, nu).unwrap();
            let scale = mu.abs() + nu;
            for &(a, b) in &INTERVALS {
                let what = format!("mu={mu} nu={nu} ({a},{b})");
                assert_close(
                    interval_prob(a, b, &g).unwrap(),
                    oracle(0, a, b, mu, nu),
                    1e-8,
                    1e-300,
                    &format!("P {what}"),
                );
                assert_close(
                    trunc_moment1(a, b, &g).unwrap(),
                    oracle(1, a, b, mu, nu),
                    1e-8,
                    1e-7 * scale,
                    &format!("M1 {what}"),
                );
                assert_close(
                    trunc_moment2(a, b, &g).unwrap(),
                    oracle(2, a, b, mu, nu),
                    1e-8,
                    1e-300,
                    &format!("M2 {what}"),
                );
            }
            let mut abs = |x: f64| x.abs() * normal_density(x, mu, nu);
            let breaks: Vec<f64> = (-40..=40)
                .map(|j| mu + f64::from(j) * nu)
                .chain([0.0])
                .collect();
            let want = integrate_pieces(&mut abs, mu - 40.0 * nu, mu + 40.0 * nu, &breaks, 0.0);
            assert_close(abs_moment(&g), want, 1e-8, 0.0, "E|x|");
            let want_sign =
                oracle(0, 0.0, f64::INFINITY, mu, nu) - oracle(0, f64::NEG_INFINITY, 0.0, mu, nu);
            assert_close(sign_moment(&g), want_sign, 1e-8, 1e-6, "E sign");
            assert_close(
                dirac_moment(0.5, &g),
                normal_density(0.5, mu, nu),
                1e-12,
                1e-300,
                "dirac",
            );
        }
    }
}

#[test]
fn sign_moment_is_cdf_complement() {
    for &mu in &MUS {
        for &nu in &NUS {
            let g = ScalarGaussian::new(mu, nu).unwrap();
            assert_eq!(
                sign_moment(&g),
                1.0 - 2.0 * normal_cdf(0.0, mu, nu).unwrap()
            );
        }
    }
}

#[test]
fn invalid_arguments_are_domain_errors() {
    assert!(ScalarGaussian::new(0.0, 0.0).is_err());
    assert!(ScalarGaussian::new(0.0, -1.0).is_err());
    assert!(ScalarGaussian::new(f64::NAN, 1.0).is_err());
    let g = ScalarGaussian::new(0.0, 1.0).unwrap();
    assert!(interval_prob(1.0, 0.0, &g).is_err());
    assert!(trunc_moment2(f64::NAN, 0.0, &g).is_err());
}

proptest! {
    #[test]
    fn first_moment_is_additive(mu in -5.0..5.0f64, nu in 0.05..8.0f64, a in -6.0..6.0f64, w1 in 0.0..4.0f64, w2 in 0.0..4.0f64) {
        let g = ScalarGaussian::new(mu, nu).unwrap();
        let (b, c) = (a + w1, a + w1 + w2);
        let lhs = trunc_moment1(a, b, &g).unwrap() + trunc_moment1(b, c, &g).unwrap();
        let rhs = trunc_moment1(a, c, &g).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-3 * (mu.abs() + nu)), "{lhs} vs {rhs}");
    }

    #[test]
    fn abs_moment_splits_at_zero(mu in -5.0..5.0f64, nu in 0.05..8.0f64) {
        let g = ScalarGaussian::new(mu, nu).unwrap();
        let split = trunc_moment1(0.0, f64::INFINITY, &g).unwrap() - trunc_moment1(f64::NEG_INFINITY, 0.0, &g).unwrap();
        prop_assert!((abs_moment(&g) - split).abs() <= 1e-12 * split.abs());
    }

    #[test]
    fn second_moment_total_is_raw_moment(mu in -5.0..5.0f64, nu in 0.05..8.0f64) {
        let g = ScalarGaussian::new(mu, nu).unwrap();
        let m2 = trunc_moment2(f64::NEG_INFINITY, f64::INFINITY, &g).unwrap();
        prop_assert!((m2 - (mu * mu + nu * nu)).abs() <= 1e-12 * (mu * mu + nu * nu));
    }
}
