//! Independent numerical oracles for the nvmp test suites.
//!
//! Nothing here depends on the library under test.

use std::collections::BinaryHeap;
use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel: (estimate, |K15 − G7|).
fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integral of `f` over [a, b]: the panel with
/// the largest error estimate is bisected until the summed estimate falls
/// below `tol` (or roundoff), or the panel budget runs out.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_PANELS: usize = 4000;
    let (value, err) = gk15(f, a, b);
    let mut heap = BinaryHeap::from([Panel {
        lo: a,
        hi: b,
        value,
        err,
    }]);
    let (mut total, mut total_err) = (value, err);
    loop {
        if total_err <= tol.max(4.0 * f64::EPSILON * total.abs()) || heap.len() >= MAX_PANELS {
            break;
        }
        let p = heap.pop().expect("non-empty");
        let mid = 0.5 * (p.lo + p.hi);
        if mid <= p.lo || mid >= p.hi {
            heap.push(p);
            break;
        }
        let l = gk15(f, p.lo, mid);
        let r = gk15(f, mid, p.hi);
        total += l.0 + r.0 - p.value;
        total_err += l.1 + r.1 - p.err;
        heap.push(Panel {
            lo: p.lo,
            hi: mid,
            value: l.0,
            err: l.1,
        });
        heap.push(Panel {
            lo: mid,
            hi: p.hi,
            value: r.0,
            err: r.1,
        });
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
    let mut values: Vec<f64> = heap.iter().map(|p| p.value).collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    values.iter().sum()
}

/// Integral over consecutive intervals cut at `breaks`.
pub fn integrate_pieces(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| *x > a && *x < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut edges = vec![a];
    edges.extend(cuts);
    edges.push(b);
    let pieces = (edges.len() - 1) as f64;
    edges
        .windows(2)
        .map(|w| integrate(f, w[0], w[1], tol / pieces))
        .sum()
}

/// N(x; m, s²) density.
pub fn normal_density(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
}

/// E f(X) for X ~ N(m, s²), integrating over m ± 40s with cuts at `breaks`.
pub fn gaussian_expectation(
    mut f: impl FnMut(f64) -> f64,
    m: f64,
    s: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let (a, b) = (m - 40.0 * s, m + 40.0 * s);
    let mut cuts: Vec<f64> = breaks.to_vec();
    for k in -8..=8 {
        cuts.push(m + f64::from(k) * s);
    }
    let mut g = |x: f64| f(x) * normal_density(x, m, s);
    integrate_pieces(&mut g, a, b, &cuts, tol)
}

/// Φ by integrating the density from the far left tail.
pub fn normal_cdf(z: f64) -> f64 {
    if z > 0.0 {
        return 1.0 - normal_cdf(-z);
    }
    let lo = z - 40.0;
    let mut breaks = Vec::new();
    let mut x = z - 1.0;
    while x > lo {
        breaks.push(x);
        x -= 1.0;
    }
    let mut g = |x: f64| normal_density(x, 0.0, 1.0);
    integrate_pieces(&mut g, lo, z, &breaks, 1e-22)
}

/// log ∫ exp(log_f(x)) dx over [a, b], stabilised by the maximum on a probe grid.
pub fn log_integral(mut log_f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let probes = 2001;
    let mut peak = f64::NEG_INFINITY;
    let mut arg = a;
    for i in 0..probes {
        let x = a + (b - a) * i as f64 / (probes - 1) as f64;
        let v = log_f(x);
        if v > peak {
            peak = v;
            arg = x;
        }
    }
    let step = (b - a) / (probes - 1) as f64;
    let breaks: Vec<f64> = (-20..=20).map(|k| arg + f64::from(k) * step).collect();
    let mut g = |x: f64| (log_f(x) - peak).exp();
    let scale = step.max(1e-300);
    peak + integrate_pieces(&mut g, a, b, &breaks, rel_tol * scale).ln()
}

/// |a − b| ≤ rel · max(|b|, floor).
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(floor)
}

/// Panics with context unless `close(a, b, rel, floor)`.
#[track_caller]
pub fn assert_close(a: f64, b: f64, rel: f64, floor: f64, what: &str) {
    assert!(
        close(a, b, rel, floor),
        "{what}: got {a:e}, want {b:e} (rel {rel:e}, floor {floor:e})"
    );
}

/// Lanczos log Γ(x) for x > 0 (g = 7, n = 9), accurate to about 1e-15.
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
