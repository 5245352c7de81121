//! Random-intercept data generators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::model::DesignBlocks;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimFamily {
    /// y ~ N(μ, σ²) with log σ = γ₀ + γ₁x + w_j.
    HeteroscedasticGaussian,
    /// y = μ + σ·t_ν.
    StudentT,
    /// y ~ Bernoulli(logistic(μ)), coded 0/1.
    Bernoulli,
}

impl SimFamily {
    pub fn name(self) -> &'static str {
        match self {
            SimFamily::HeteroscedasticGaussian => "heteroscedastic",
            SimFamily::StudentT => "student_t",
            SimFamily::Bernoulli => "bernoulli",
        }
    }
}

impl fmt::Display for SimFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heteroscedastic" | "heteroscedastic_gaussian" => Ok(SimFamily::HeteroscedasticGaussian),
            "student_t" | "t" => Ok(SimFamily::StudentT),
            "bernoulli" => Ok(SimFamily::Bernoulli),
            other => Err(Error::Config(format!(
                "unknown simulation family '{other}' (expected heteroscedastic, student_t or bernoulli)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub family: SimFamily,
    pub n: usize,
    /// Number of groups.
    pub d: usize,
    pub seed: u64,
    /// Scale of the t-model.
    pub sigma: f64,
    /// Degrees of freedom of the t-model.
    pub dof: f64,
}

impl SimConfig {
    pub fn new(family: SimFamily, n: usize, d: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            d,
            seed,
            sigma: 0.1,
            dof: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n < self.d {
            return Err(Error::domain(format!(
                "need n >= d >= 1, got n={} d={}",
                self.n, self.d
            )));
        }
        if self.family == SimFamily::StudentT && !(self.dof > 2.0 && self.sigma > 0.0) {
            return Err(Error::domain("t-model needs dof > 2 and sigma > 0"));
        }
        Ok(())
    }
}

/// Responses, design and (when simulated) the generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub y: Vec<T>,
    pub design: DesignBlocks<T>,
    pub x_names: Vec<String>,
    pub truth: Option<BTreeMap<String, Vec<f64>>>,
}

impl<T: Real> Dataset<T> {
    /// Maps 0/1 responses to −1/+1.
    pub fn recode_pm1(&self) -> Result<Self> {
        let y = self
            .y
            .iter()
            .map(|v| {
                if *v == T::zero() || *v == T::one() {
                    Ok(T::of(2.0) * *v - T::one())
                } else {
                    Err(Error::domain(format!("response {v} is not 0/1")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { y, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Group of observation i; groups are balanced round-robin.
pub fn group_of(i: usize, d: usize) -> usize {
    i % d
}

pub fn simulate<T: Real>(cfg: &SimConfig) -> Result<Dataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fixed = Normal::new(0.0, 0.5_f64.sqrt()).expect("valid normal");
    let random = Normal::new(0.0, 0.5).expect("valid normal");
    let beta = [fixed.sample(&mut rng), fixed.sample(&mut rng)];
    let hetero = cfg.family == SimFamily::HeteroscedasticGaussian;
    let gamma = if hetero {
        [fixed.sample(&mut rng), fixed.sample(&mut rng)]
    } else {
        [0.0, 0.0]
    };
    let u: Vec<f64> = (0..cfg.d).map(|_| random.sample(&mut rng)).collect();
    let w: Vec<f64> = if hetero {
        (0..cfg.d).map(|_| random.sample(&mut rng)).collect()
    } else {
        vec![]
    };
    let t = StudentT::new(cfg.dof).map_err(|e| Error::domain(format!("t distribution: {e}")))?;

    let n = cfg.n;
    let mut x = DMatrix::<T>::zeros(n, 2);
    let mut z = DMatrix::<T>::zeros(n, cfg.d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let j = group_of(i, cfg.d);
        let xi: f64 = StandardNormal.sample(&mut rng);
        let mu = beta[0] + beta[1] * xi + u[j];
        let yi = match cfg.family {
            SimFamily::HeteroscedasticGaussian => {
                let s = (gamma[0] + gamma[1] * xi + w[j]).exp();
                let e: f64 = StandardNormal.sample(&mut rng);
                mu + s * e
            }
            SimFamily::StudentT => mu + cfg.sigma * t.sample(&mut rng),
            SimFamily::Bernoulli => {
                let p = 1.0 / (1.0 + (-mu).exp());
                let b = Bernoulli::new(p).expect("probability in [0, 1]");
                if b.sample(&mut rng) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        x[(i, 0)] = T::one();
        x[(i, 1)] = T::of(xi);
        z[(i, j)] = T::one();
        y.push(T::of(yi));
    }
    let mut truth = BTreeMap::from([("beta".to_string(), beta.to_vec()), ("u".to_string(), u)]);
    if hetero {
        truth.insert("gamma".into(), gamma.to_vec());
        truth.insert("w".into(), w);
    }
    Ok(Dataset {
        y,
        design: DesignBlocks::new(x, vec![z], None, vec![None])?,
        x_names: vec!["intercept".into(), "x".into()],
        truth: Some(truth),
    })
}
