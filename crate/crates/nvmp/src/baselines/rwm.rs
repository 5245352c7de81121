//! Componentwise random-walk Metropolis on the generalized posterior, with
//! variances sampled on the log scale.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::baselines::kde::{accuracy_score, Marginal};
use crate::error::{Error, Result};
use crate::loss::{value_unchecked, LossSpec};
use crate::model::{DesignBlocks, PriorConfig, VariationalState};
use crate::scalar::Real;
use crate::vmp::check_inputs;

/// Target acceptance rate for componentwise proposals during burn-in.
const TARGET_ACCEPT: f64 = 0.44;
const ADAPT_BATCH: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct RwmOptions<T> {
    pub draws: usize,
    pub burn: usize,
    pub step_scale: T,
    pub seed: u64,
    /// Keep every `thin`-th sweep.
    pub thin: usize,
    /// Per-coordinate proposal scales, multiplied by `step_scale`.
    pub scales: Option<Vec<T>>,
    /// Starting point in the sampler's parameterization.
    pub init: Option<Vec<T>>,
    /// Tune per-coordinate scales toward the target acceptance during burn-in.
    pub adapt: bool,
}

impl<T: Real> Default for RwmOptions<T> {
    fn default() -> Self {
        Self {
            draws: 10_000,
            burn: 2_000,
            step_scale: T::one(),
            seed: 0,
            thin: 1,
            scales: None,
            init: None,
            adapt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcDraws<T: Real> {
    /// draws × parameters.
    pub samples: DMatrix<T>,
    pub param_names: Vec<String>,
    /// Fraction of accepted componentwise proposals after burn-in.
    pub acceptance_rate: f64,
}

impl<T: Real> McmcDraws<T> {
    pub fn column(&self, j: usize) -> Vec<T> {
        self.samples.column(j).iter().copied().collect()
    }

    pub fn means(&self) -> Vec<T> {
        let k = T::of_usize(self.samples.nrows());
        (0..self.samples.ncols())
            .map(|j| self.samples.column(j).iter().copied().sum::<T>() / k)
            .collect()
    }
}

/// Names in sampler order: β, u blocks, log σ_ε², log σ_h².
pub fn parameter_names<T: Real>(design: &DesignBlocks<T>) -> Vec<String> {
    let mut names: Vec<String> = (1..=design.p()).map(|j| format!("beta_{j}")).collect();
    for h in 0..design.h() {
        names.extend((1..=design.d(h)).map(|j| format!("u_{}_{j}", h + 1)));
    }
    names.push("log_sigma2_eps".into());
    names.extend((1..=design.h()).map(|h| format!("log_sigma2_{h}")));
    names
}

/// Variational marginals in sampler order.
pub fn marginals<T: Real>(state: &VariationalState<T>) -> Vec<Marginal<T>> {
    let g = &state.gauss;
    let mut out: Vec<Marginal<T>> = (0..g.dim())
        .map(|j| Marginal::Gaussian {
            mean: g.mu()[j],
            sd: g.sigma()[(j, j)].sqrt(),
        })
        .collect();
    out.push(Marginal::LogInvGamma {
        alpha: state.ig_eps.alpha,
        beta: state.ig_eps.beta,
    });
    out.extend(state.ig.iter().map(|q| Marginal::LogInvGamma {
        alpha: q.alpha,
        beta: q.beta,
    }));
    out
}

/// Proposal scales and a starting point taken from a variational fit.
pub fn scales_from_state<T: Real>(state: &VariationalState<T>) -> (Vec<T>, Vec<T>) {
    let ms = marginals(state);
    let scales = ms.iter().map(|m| m.sd()).collect();
    let init = ms.iter().map(|m| m.mean()).collect();
    (scales, init)
}

/// Accuracy of each variational marginal against the matching chain column,
/// and their mean.
pub fn mean_marginal_accuracy<T: Real>(
    state: &VariationalState<T>,
    draws: &McmcDraws<T>,
) -> Result<(T, Vec<T>)> {
    let ms = marginals(state);
    if ms.len() != draws.samples.ncols() {
        return Err(Error::structural(
            "variational state and chain have different parameter counts",
        ));
    }
    let scores = ms
        .iter()
        .enumerate()
        .map(|(j, m)| accuracy_score(m, &draws.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().copied().sum::<T>() / T::of_usize(scores.len());
    Ok((mean, scores))
}

struct Chain<'a, T: Real> {
    design: &'a DesignBlocks<T>,
    y: &'a [T],
    prior: &'a PriorConfig<T>,
    spec: &'a LossSpec<T>,
    theta: Vec<T>,
    eta: Vec<T>,
    loss_sum: T,
    /// u_hᵀR_hu_h per block.
    quad: Vec<T>,
}

impl<'a, T: Real> Chain<'a, T> {
    fn d(&self) -> usize {
        self.design.d_star()
    }

    fn log_eps(&self) -> T {
        self.theta[self.d()]
    }

    fn log_h(&self, h: usize) -> T {
        self.theta[self.d() + 1 + h]
    }

    fn loss_sum_of(&self, eta: impl Iterator<Item = T>) -> T {
        eta.zip(self.y)
            .map(|(e, y)| value_unchecked(self.spec, *y, e))
            .sum()
    }

    fn block_of(&self, j: usize) -> Option<usize> {
        (0..self.design.h()).find(|&h| self.design.block(h).contains(&j))
    }

    fn beta_quad(&self) -> T {
        let p = self.design.p();
        let b = DVector::from_column_slice(&self.theta[..p]);
        (self.design.r_beta() * &b).dot(&b)
    }

    fn block_quad(&self, h: usize, theta: &[T]) -> T {
        let r = self.design.block(h);
        let u = DVector::from_column_slice(&theta[r]);
        (self.design.r(h) * &u).dot(&u)
    }

    fn log_variance_prior(a: T, b: T, l: T) -> T {
        -a * l - b * (-l).exp()
    }

    fn log_density(&self) -> T {
        let half = T::of(0.5);
        let phi = self.prior.phi;
        let le = self.log_eps();
        let n = T::of_usize(self.design.n());
        let mut v = -half * self.beta_quad() / self.prior.sigma2_beta
            - n / phi * le
            - self.loss_sum / (phi * le.exp())
            + Self::log_variance_prior(self.prior.a_eps, self.prior.b_eps, le);
        for h in 0..self.design.h() {
            let lh = self.log_h(h);
            v += -half * T::of_usize(self.design.d(h)) * lh - half * (-lh).exp() * self.quad[h]
                + Self::log_variance_prior(self.prior.a[h], self.prior.b[h], lh);
        }
        v
    }
}

/// Metropolis-within-Gibbs: one draw is a sweep over every coordinate.
pub fn rwm_sample<T: Real>(
    design: &DesignBlocks<T>,
    y: &[T],
    prior: &PriorConfig<T>,
    spec: &LossSpec<T>,
    opts: &RwmOptions<T>,
) -> Result<McmcDraws<T>>
where
    StandardNormal: Distribution<T>,
{
    check_inputs(design, y, prior, spec)?;
    if opts.draws == 0 || opts.thin == 0 {
        return Err(Error::Config("draws and thin must be at least 1".into()));
    }
    if !(opts.step_scale > T::zero()) {
        return Err(Error::Config("step_scale must be positive".into()));
    }
    let d = design.d_star();
    let dim = d + 1 + design.h();
    let theta = match &opts.init {
        Some(v) if v.len() == dim => v.clone(),
        Some(v) => {
            return Err(Error::structural(format!(
                "init has {} entries, sampler needs {dim}",
                v.len()
            )))
        }
        None => {
            let mut t = vec![T::zero(); d];
            t.push((prior.b_eps / (prior.a_eps + T::one())).ln());
            t.extend(
                prior
                    .a
                    .iter()
                    .zip(&prior.b)
                    .map(|(a, b)| (*b / (*a + T::one())).ln()),
            );
            t
        }
    };
    let mut scales: Vec<T> = match &opts.scales {
        Some(s) if s.len() == dim => s.iter().map(|v| *v * opts.step_scale).collect(),
        Some(s) => {
            return Err(Error::structural(format!(
                "{} scales for {dim} parameters",
                s.len()
            )))
        }
        None => vec![opts.step_scale; dim],
    };
    if scales.iter().any(|s| !(*s > T::zero() && s.is_finite())) {
        return Err(Error::Config(
            "proposal scales must be positive and finite".into(),
        ));
    }

    let c = design.c();
    let beta_u = DVector::from_column_slice(&theta[..d]);
    let eta: Vec<T> = (c * &beta_u).iter().copied().collect();
    let mut chain = Chain {
        design,
        y,
        prior,
        spec,
        theta,
        eta,
        loss_sum: T::zero(),
        quad: Vec::new(),
    };
    chain.loss_sum = chain.loss_sum_of(chain.eta.iter().copied());
    chain.quad = (0..design.h())
        .map(|h| chain.block_quad(h, &chain.theta))
        .collect();
    let mut current = chain.log_density();
    if !current.is_finite() {
        return Err(Error::Numerical(
            "log posterior is not finite at the initial point".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let unif = Uniform::new(0.0_f64, 1.0).expect("unit interval");
    let total = opts.burn + opts.draws * opts.thin;
    let mut samples = DMatrix::zeros(opts.draws, dim);
    let mut kept = 0;
    let mut accepted = 0_usize;
    let mut proposed = 0_usize;
    let mut batch_accept = vec![0_usize; dim];
    let mut new_eta = vec![T::zero(); design.n()];

    for sweep in 0..total {
        let burning = sweep < opts.burn;
        for j in 0..dim {
            let z: T = StandardNormal.sample(&mut rng);
            let delta = scales[j] * z;
            let old = chain.theta[j];
            let saved = (chain.loss_sum, chain.quad.clone());
            chain.theta[j] = old + delta;
            if j < d {
                let col = c.column(j);
                for i in 0..design.n() {
                    new_eta[i] = chain.eta[i] + delta * col[i];
                }
                chain.loss_sum = chain.loss_sum_of(new_eta.iter().copied());
                if let Some(h) = chain.block_of(j) {
                    chain.quad[h] = chain.block_quad(h, &chain.theta);
                }
            }
            let proposal = chain.log_density();
            let log_u = T::of(unif.sample(&mut rng).ln());
            let accept = proposal.is_finite() && log_u < proposal - current;
            if accept {
                current = proposal;
                if j < d {
                    std::mem::swap(&mut chain.eta, &mut new_eta);
                }
                if burning {
                    batch_accept[j] += 1;
                } else {
                    accepted += 1;
                }
            } else {
                chain.theta[j] = old;
                chain.loss_sum = saved.0;
                chain.quad = saved.1;
            }
            if !burning {
                proposed += 1;
            }
        }
        if burning && opts.adapt && (sweep + 1) % ADAPT_BATCH == 0 {
            let step = ((sweep + 1) / ADAPT_BATCH) as f64;
            let delta = (1.0 / step.sqrt()).min(0.1);
            for j in 0..dim {
                let rate = batch_accept[j] as f64 / ADAPT_BATCH as f64;
                let f = if rate > TARGET_ACCEPT {
                    delta.exp()
                } else {
                    (-delta).exp()
                };
                scales[j] *= T::of(f);
                batch_accept[j] = 0;
            }
        }
        if !burning && (sweep - opts.burn + 1).is_multiple_of(opts.thin) {
            for j in 0..dim {
                samples[(kept, j)] = chain.theta[j];
            }
            kept += 1;
        }
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("chain produced non-finite values".into()));
    }
    Ok(McmcDraws {
        samples,
        param_names: parameter_names(design),
        acceptance_rate: if proposed == 0 {
            0.0
        } else {
            accepted as f64 / proposed as f64
        },
    })
}
