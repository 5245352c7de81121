//! Replicated simulation experiments over (n, d) grids.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::mfvb::fit_mfvb_quantile;
use crate::baselines::rwm::{mean_marginal_accuracy, rwm_sample, scales_from_state, RwmOptions};
use crate::error::{Error, Result};
use crate::loss::{LossFamily, LossSpec};
use crate::model::{DesignBlocks, PriorConfig, VariationalState};
use crate::simlab::simulate::{simulate, Dataset, SimConfig, SimFamily};
use crate::svmp::{fit_svmp, StochasticOptions};
use crate::vmp::{fit_vmp, FitOptions, FitReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Vmp,
    Svmp,
    MfvbQuantile,
    Rwm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vmp => "vmp",
            Method::Svmp => "svmp",
            Method::MfvbQuantile => "mfvb_quantile",
            Method::Rwm => "rwm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vmp" => Ok(Method::Vmp),
            "svmp" => Ok(Method::Svmp),
            "mfvb_quantile" | "mfvb" => Ok(Method::MfvbQuantile),
            "rwm" => Ok(Method::Rwm),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected vmp, svmp, mfvb_quantile or rwm)"
            ))),
        }
    }
}

/// Parses a comma-separated method list, dropping duplicates.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("method list is empty".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub family: SimFamily,
    pub loss: LossSpec<f64>,
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub replications: usize,
    /// Replication r uses dataset seed `base_seed + r`.
    pub base_seed: u64,
    pub prior: PriorConfig<f64>,
    pub fit: FitOptions<f64>,
    pub stochastic: StochasticOptions<f64>,
    pub rwm: RwmOptions<f64>,
}

impl ExperimentPlan {
    /// Heteroscedastic quantile design with σ_β² = 10⁴ and the default engine options.
    pub fn quantile(
        tau: f64,
        methods: Vec<Method>,
        n_grid: Vec<usize>,
        d_grid: Vec<usize>,
        replications: usize,
    ) -> Result<Self> {
        Ok(Self {
            family: SimFamily::HeteroscedasticGaussian,
            loss: LossSpec::quantile(tau)?,
            methods,
            n_grid,
            d_grid,
            replications,
            base_seed: 0,
            prior: PriorConfig {
                sigma2_beta: 1e4,
                ..PriorConfig::with_defaults(1)
            },
            fit: FitOptions::default(),
            stochastic: StochasticOptions::default(),
            rwm: RwmOptions::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty()
            || self.n_grid.is_empty()
            || self.d_grid.is_empty()
            || self.replications == 0
        {
            return Err(Error::Config(
                "plan needs methods, n and d grids and at least one replication".into(),
            ));
        }
        if self.methods.contains(&Method::MfvbQuantile)
            && self.loss.family() != LossFamily::Quantile
        {
            return Err(Error::Config(format!(
                "mfvb_quantile needs the quantile loss, plan uses {}",
                self.loss.family()
            )));
        }
        let classification =
            self.loss.family().is_classification() || self.loss.family() == LossFamily::Logistic;
        if classification != (self.family == SimFamily::Bernoulli) {
            return Err(Error::Config(format!(
                "loss {} does not match the {} generator",
                self.loss.family(),
                self.family
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// NaN for rwm.
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Mean accuracy against the rwm chain; NaN when rwm is not in the plan.
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub replications: usize,
    pub mean_elbo: f64,
    pub mean_iterations: f64,
    pub mean_wall_time: f64,
    pub mean_accuracy: f64,
}

fn response_for(plan: &ExperimentPlan, ds: Dataset<f64>) -> Result<Dataset<f64>> {
    if plan.loss.family().is_classification() {
        ds.recode_pm1()
    } else {
        Ok(ds)
    }
}

/// One method's outcome on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    /// NaN for rwm.
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Per-parameter accuracy against the rwm chain, in sampler order; empty
    /// when rwm is not requested and for the rwm row itself.
    pub accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Engine settings shared by every method of a comparison.
#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub fit: FitOptions<f64>,
    pub stochastic: StochasticOptions<f64>,
    pub rwm: RwmOptions<f64>,
}

/// Fits each requested method on one dataset. The chain starts from the VMP
/// fit and every variational method is scored against it. Rows follow the
/// order of [`Method`].
pub fn compare_methods(
    design: &DesignBlocks<f64>,
    y: &[f64],
    prior: &PriorConfig<f64>,
    loss: &LossSpec<f64>,
    methods: &[Method],
    opts: &CompareOptions,
) -> Result<Vec<MethodResult>> {
    if methods.contains(&Method::MfvbQuantile) && loss.family() != LossFamily::Quantile {
        return Err(Error::Config(format!(
            "mfvb_quantile needs the quantile loss, got {}",
            loss.family()
        )));
    }
    let wants = |m| methods.contains(&m);
    let vmp = if wants(Method::Vmp) || wants(Method::Rwm) {
        Some(fit_vmp(design, y, prior, loss, &opts.fit, None)?)
    } else {
        None
    };
    let mut fits: Vec<(Method, FitReport<f64>)> = Vec::new();
    if wants(Method::Vmp) {
        fits.push((Method::Vmp, vmp.clone().expect("vmp fitted")));
    }
    if wants(Method::Svmp) {
        let st = StochasticOptions {
            minibatch: opts.stochastic.minibatch.min(design.n()),
            ..opts.stochastic.clone()
        };
        fits.push((Method::Svmp, fit_svmp(design, y, prior, loss, &st, None)?));
    }
    if wants(Method::MfvbQuantile) {
        let tau = loss.tau().expect("quantile loss has tau");
        fits.push((
            Method::MfvbQuantile,
            fit_mfvb_quantile(design, y, prior, tau, &opts.fit)?.report,
        ));
    }

    let mut rows = Vec::new();
    let chain = if wants(Method::Rwm) {
        let vs: &VariationalState<f64> = &vmp.as_ref().expect("vmp fitted").state;
        let (scales, init) = scales_from_state(vs);
        let ro = RwmOptions {
            scales: Some(scales),
            init: Some(init),
            ..opts.rwm.clone()
        };
        let t0 = Instant::now();
        let draws = rwm_sample(design, y, prior, loss, &ro)?;
        rows.push(MethodResult {
            method: Method::Rwm,
            elbo: f64::NAN,
            iterations: ro.draws,
            converged: true,
            wall_time: t0.elapsed().as_secs_f64(),
            accuracy: Vec::new(),
            mean_accuracy: f64::NAN,
        });
        Some(draws)
    } else {
        None
    };
    for (m, r) in fits {
        let (mean_accuracy, accuracy) = match &chain {
            Some(c) => mean_marginal_accuracy(&r.state, c)?,
            None => (f64::NAN, Vec::new()),
        };
        rows.push(MethodResult {
            method: m,
            elbo: r.final_elbo().unwrap_or(f64::NAN),
            iterations: r.iterations,
            converged: r.converged,
            wall_time: r.wall_time.as_secs_f64(),
            accuracy,
            mean_accuracy,
        });
    }
    rows.sort_by_key(|r| r.method);
    Ok(rows)
}

fn run_cell(plan: &ExperimentPlan, cfg: &SimConfig) -> Result<Vec<ExperimentRow>> {
    let ds = response_for(plan, simulate::<f64>(cfg)?)?;
    let prior = PriorConfig {
        a: vec![plan.prior.a[0]; ds.design.h()],
        b: vec![plan.prior.b[0]; ds.design.h()],
        ..plan.prior.clone()
    };
    let opts = CompareOptions {
        fit: FitOptions {
            seed: cfg.seed,
            ..plan.fit.clone()
        },
        stochastic: StochasticOptions {
            seed: cfg.seed,
            ..plan.stochastic.clone()
        },
        rwm: RwmOptions {
            seed: cfg.seed,
            ..plan.rwm.clone()
        },
    };
    let rows = compare_methods(&ds.design, &ds.y, &prior, &plan.loss, &plan.methods, &opts)?;
    Ok(rows
        .into_iter()
        .map(|r| ExperimentRow {
            method: r.method,
            n: cfg.n,
            d: cfg.d,
            seed: cfg.seed,
            elbo: r.elbo,
            iterations: r.iterations,
            converged: r.converged,
            wall_time: r.wall_time,
            mean_accuracy: r.mean_accuracy,
        })
        .collect())
}

/// Runs every (n, d, replication) cell serially; rows come back sorted by
/// method, n, d, seed.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<ExperimentRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for &n in &plan.n_grid {
        for &d in &plan.d_grid {
            for r in 0..plan.replications {
                let cfg = SimConfig::new(plan.family, n, d, plan.base_seed + r as u64);
                rows.extend(run_cell(plan, &cfg)?);
            }
        }
    }
    rows.sort_by_key(|r| (r.method, r.n, r.d, r.seed));
    Ok(rows)
}

/// Per (method, n, d) means over replications; NaN entries are skipped.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    let mean = |v: Vec<f64>| {
        let v: Vec<f64> = v.into_iter().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let mut out: Vec<SummaryRow> = Vec::new();
    for chunk in rows.chunk_by(|a, b| (a.method, a.n, a.d) == (b.method, b.n, b.d)) {
        let r0 = &chunk[0];
        out.push(SummaryRow {
            method: r0.method,
            n: r0.n,
            d: r0.d,
            replications: chunk.len(),
            mean_elbo: mean(chunk.iter().map(|r| r.elbo).collect()),
            mean_iterations: mean(chunk.iter().map(|r| r.iterations as f64).collect()),
            mean_wall_time: mean(chunk.iter().map(|r| r.wall_time).collect()),
            mean_accuracy: mean(chunk.iter().map(|r| r.mean_accuracy).collect()),
        });
    }
    out
}

fn write_csv(
    path: &Path,
    header: &[&str],
    records: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_record(header).map_err(|e| io(e.into()))?;
    for rec in records {
        w.write_record(&rec).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

pub const RUNS_HEADER: [&str; 9] = [
    "method",
    "n",
    "d",
    "seed",
    "elbo",
    "iterations",
    "converged",
    "wall_time",
    "mean_accuracy",
];
pub const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "n",
    "d",
    "replications",
    "mean_elbo",
    "mean_iterations",
    "mean_wall_time",
    "mean_accuracy",
];

/// Writes `runs.csv` and `summary.csv` into `dir`.
pub fn write_experiment(rows: &[ExperimentRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_csv(
        &dir.join("runs.csv"),
        &RUNS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.n.to_string(),
                r.d.to_string(),
                r.seed.to_string(),
                r.elbo.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.wall_time.to_string(),
                r.mean_accuracy.to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("summary.csv"),
        &SUMMARY_HEADER,
        summarize(rows).iter().map(|s| {
            vec![
                s.method.to_string(),
                s.n.to_string(),
                s.d.to_string(),
                s.replications.to_string(),
                s.mean_elbo.to_string(),
                s.mean_iterations.to_string(),
                s.mean_wall_time.to_string(),
                s.mean_accuracy.to_string(),
            ]
        }),
    )
}
