use nvmp::quadrature::{KINK_REFERENCE_ORDER, ORACLE_ORDER};
use nvmp::{agh_expect, gauss_hermite_rule, psi_triple_quadrature, LossSpec};
use nvmp_testkit::close;
use proptest::prelude::*;

const MS: [f64; 7] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
const NUS: [f64; 3] = [0.1, 1.0, 3.0];

/// Probabilists' Hermite polynomial He_k by the three-term recurrence.
fn hermite_he(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if k == 0 {
        return a;
    }
    for j in 1..k {
        let c = x * b - j as f64 * a;
        a = b;
        b = c;
    }
    b
}

#[test]
fn five_point_rule_matches_hermite_roots() {
    // He₅ = x⁵ − 10x³ + 15x has roots 0, ±√(5 ± √10); weights n!/(n·He₄(x))²
    let s = 10f64.sqrt();
    let mut roots = [
        -(5.0 + s).sqrt(),
        -(5.0 - s).sqrt(),
        0.0,
        (5.0 - s).sqrt(),
        (5.0 + s).sqrt(),
    ];
    roots.sort_by(f64::total_cmp);
    let rule = gauss_hermite_rule::<f64>(5).unwrap();
    for (k, &x) in roots.iter().enumerate() {
        let w = 120.0 / (5.0 * hermite_he(4, x)).powi(2);
        assert!((rule.nodes()[k] - x).abs() < 1e-14, "node {k}");
        assert!((rule.weights()[k] - w).abs() < 1e-14, "weight {k}");
        assert!(hermite_he(5, rule.nodes()[k]).abs() < 1e-12);
    }
}

#[test]
fn rules_are_symmetric_and_normalized() {
    for order in [2usize, 7, 30, 31, 61, 201] {
        let r = gauss_hermite_rule::<f64>(order).unwrap();
        let total: f64 = r.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-13, "order {order}");
        for k in 0..order {
            assert_eq!(r.nodes()[k], -r.nodes()[order - 1 - k]);
            assert_eq!(r.weights()[k], r.weights()[order - 1 - k]);
        }
        assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn smooth_integrands_refine_monotonically() {
    let specs = [
        LossSpec::expectile(0.1).unwrap(),
        LossSpec::expectile(0.9).unwrap(),
        LossSpec::huber_regression(0.05).unwrap(),
        LossSpec::huber_regression(1.0).unwrap(),
        LossSpec::logistic(),
    ];
    let orders = [15usize, 31, 63, 127];
    for spec in &specs {
        let ys: &[f64] = if spec.family() == nvmp::LossFamily::Logistic {
            &[0.0, 1.0]
        } else {
            &[-2.0, 0.0, 2.0]
        };
        for &y in ys {
            for &m in &MS {
                for &nu in &NUS {
                    let at = |o: usize| psi_triple_quadrature(spec, y, m, nu, o).unwrap().psi0;
                    let vals: Vec<f64> = orders
                        .iter()
                        .map(|&o| at(o))
                        .chain([at(2 * 127 + 1)])
                        .collect();
                    let floor = 1e-13 * vals[0].abs().max(1.0);
                    let gaps: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
                    for g in gaps.windows(2) {
                        assert!(
                            g[1] <= g[0] || g[1] <= floor,
                            "{} y={y} m={m} nu={nu}: gaps {gaps:?}",
                            spec.family()
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn kinked_integrands_agree_with_reference_order() {
    let mut specs = vec![LossSpec::svc()];
    for t in [0.1, 0.5, 0.9] {
        specs.push(LossSpec::quantile(t).unwrap());
    }
    for e in [0.01, 0.05, 1.0] {
        specs.push(LossSpec::svr(e).unwrap());
    }
    for spec in &specs {
        let ys: &[f64] = if spec.family().is_classification() {
            &[-1.0, 1.0]
        } else {
            &[-2.0, 0.0, 2.0]
        };
        for &y in ys {
            for &m in &MS {
                for &nu in &NUS {
                    let reference = psi_triple_quadrature(spec, y, m, nu, KINK_REFERENCE_ORDER)
                        .unwrap()
                        .psi0;
                    let got = psi_triple_quadrature(spec, y, m, nu, ORACLE_ORDER)
                        .unwrap()
                        .psi0;
                    assert!(
                        close(got, reference, 1e-6, 1e-300),
                        "{} y={y} m={m} nu={nu}: {got} vs {reference}",
                        spec.family()
                    );
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn centering_is_an_exact_location_scale_shift(
        m in -5.0..5.0f64,
        nu in 0.01..4.0f64,
        a in -1.0..1.0f64,
        b in -1.0..1.0f64,
        order in 3usize..40,
    ) {
        let f = |x: f64| a * x.powi(3) + (b * x).cos() + (0.2 * x).exp();
        let direct = agh_expect(f, m, nu, order).unwrap();
        let shifted = agh_expect(|z| f(m + nu * z), 0.0, 1.0, order).unwrap();
        prop_assert!((direct - shifted).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn rules_integrate_polynomials_exactly(order in 2usize..30, m in -2.0..2.0f64, nu in 0.1..2.0f64) {
        // E x^k for x ~ N(m, ν²) via E He_k(z) = 0 (k ≥ 1); exact up to degree 2·order − 1
        let k = (2 * order - 1).min(9);
        let got = agh_expect(|x| hermite_he(k, (x - m) / nu), m, nu, order).unwrap();
        prop_assert!(got.abs() <= 1e-9 * (1..=k).product::<usize>() as f64, "k={k} got {got}");
    }
}
