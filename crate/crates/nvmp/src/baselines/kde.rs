//! Gaussian kernel density estimation and the accuracy score against sampled marginals.

use crate::error::{Error, Result};
use crate::gauss::std_pdf;
use crate::scalar::{digamma, trigamma, Real};

/// Number of grid points used by [`accuracy_score`].
pub const ACCURACY_GRID: usize = 512;

/// Kernel half-width, in bandwidths, beyond which contributions are dropped.
const CUTOFF: f64 = 8.0;

/// A univariate variational marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal<T> {
    Gaussian {
        mean: T,
        sd: T,
    },
    /// Law of log σ² when σ² ~ IG(α, β).
    LogInvGamma {
        alpha: T,
        beta: T,
    },
}

impl<T: Real> Marginal<T> {
    pub fn pdf(&self, x: T) -> T {
        match *self {
            Marginal::Gaussian { mean, sd } => std_pdf((x - mean) / sd) / sd,
            Marginal::LogInvGamma { alpha, beta } => {
                (alpha * beta.ln() - alpha.ln_gamma() - alpha * x - beta * (-x).exp()).exp()
            }
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            Marginal::Gaussian { mean, .. } => mean,
            Marginal::LogInvGamma { alpha, beta } => beta.ln() - digamma(alpha),
        }
    }

    pub fn sd(&self) -> T {
        match *self {
            Marginal::Gaussian { sd, .. } => sd,
            Marginal::LogInvGamma { alpha, .. } => trigamma(alpha).sqrt(),
        }
    }
}

fn mean_sd<T: Real>(samples: &[T]) -> (T, T) {
    let n = T::of_usize(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;
    let var = samples.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

/// Silverman's rule of thumb, 1.06·sd·n^{−1/5}.
pub fn silverman_bandwidth<T: Real>(samples: &[T]) -> Result<T> {
    if samples.len() < 2 {
        return Err(Error::domain("KDE needs at least two samples"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("KDE samples must be finite"));
    }
    let (_, sd) = mean_sd(samples);
    if !(sd > T::zero()) {
        return Err(Error::domain("KDE samples have zero variance"));
    }
    Ok(T::of(1.06) * sd * T::of_usize(samples.len()).powf(T::of(-0.2)))
}

/// Gaussian-kernel density estimate of `samples` at each point of `grid`.
pub fn kde_density<T: Real>(samples: &[T], grid: &[T]) -> Result<Vec<T>> {
    let h = silverman_bandwidth(samples)?;
    kde_with_bandwidth(samples, grid, h)
}

pub fn kde_with_bandwidth<T: Real>(samples: &[T], grid: &[T], h: T) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::domain("bandwidth must be positive"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let reach = T::of(CUTOFF) * h;
    let norm = T::of_usize(sorted.len()) * h;
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|s| *s < x - reach);
            let hi = sorted.partition_point(|s| *s <= x + reach);
            sorted[lo..hi]
                .iter()
                .map(|s| std_pdf((x - *s) / h))
                .sum::<T>()
                / norm
        })
        .collect())
}

/// Trapezoid rule on a uniform or non-uniform grid.
pub fn trapezoid<T: Real>(grid: &[T], f: &[T]) -> T {
    let half = T::of(0.5);
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| half * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// 100(1 − ½∫|q − p̂|) where p̂ is the KDE of `samples`.
pub fn accuracy_score<T: Real>(q: &Marginal<T>, samples: &[T]) -> Result<T> {
    let h = silverman_bandwidth(samples)?;
    let (lo_s, hi_s) = samples
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(a, b), x| {
            (a.min(*x), b.max(*x))
        });
    let six = T::of(6.0);
    let four = T::of(4.0);
    let (qm, qs) = (q.mean(), q.sd());
    if !(qs > T::zero() && qm.is_finite()) {
        return Err(Error::domain(
            "variational marginal must have finite mean and positive sd",
        ));
    }
    let lo = (qm - six * qs).min(lo_s - four * h);
    let hi = (qm + six * qs).max(hi_s + four * h);
    let step = (hi - lo) / T::of_usize(ACCURACY_GRID - 1);
    let grid: Vec<T> = (0..ACCURACY_GRID)
        .map(|i| lo + step * T::of_usize(i))
        .collect();
    let kde = kde_with_bandwidth(samples, &grid, h)?;
    let diff: Vec<T> = grid
        .iter()
        .zip(&kde)
        .map(|(x, p)| (q.pdf(*x) - *p).abs())
        .collect();
    let score = T::of(100.0) * (T::one() - T::of(0.5) * trapezoid(&grid, &diff));
    Ok(score.max(T::zero()).min(T::of(100.0)))
}
