//! The `report.json` document written by `fit`.

use std::collections::BTreeMap;

use nvmp::{Dataset, FitReport, LossSpec};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct LossEntry {
    pub family: String,
    pub tau: Option<f64>,
    pub eps: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Coefficient {
    pub name: String,
    /// `beta` or `u_<h>`.
    pub block: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Serialize)]
pub struct InvGammaEntry {
    pub name: String,
    pub alpha: f64,
    pub beta: f64,
    /// β/(α − 1), absent when α ≤ 1.
    pub mean: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub engine: String,
    pub loss: LossEntry,
    pub phi: f64,
    pub seed: u64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_elbo: Option<f64>,
    pub wall_time_seconds: f64,
    pub coefficients: Vec<Coefficient>,
    pub variances: Vec<InvGammaEntry>,
    pub diagnostics: BTreeMap<String, f64>,
}

fn ig(name: String, alpha: f64, beta: f64) -> InvGammaEntry {
    InvGammaEntry {
        name,
        alpha,
        beta,
        mean: (alpha > 1.0).then(|| beta / (alpha - 1.0)),
    }
}

impl Report {
    pub fn new(
        engine: &str,
        spec: &LossSpec<f64>,
        phi: f64,
        seed: u64,
        ds: &Dataset<f64>,
        fit: &FitReport<f64>,
    ) -> Self {
        let design = &ds.design;
        let g = &fit.state.gauss;
        let mut coefficients = Vec::with_capacity(design.d_star());
        let mut push = |name: String, block: String, j: usize| {
            coefficients.push(Coefficient {
                name,
                block,
                mean: g.mu()[j],
                sd: g.sigma()[(j, j)].sqrt(),
            });
        };
        for (j, name) in ds.x_names.iter().enumerate() {
            push(name.clone(), "beta".into(), j);
        }
        for h in 0..design.h() {
            for (k, j) in design.block(h).enumerate() {
                push(format!("u_{}_{}", h + 1, k + 1), format!("u_{}", h + 1), j);
            }
        }
        let mut variances = vec![ig(
            "sigma2_eps".into(),
            fit.state.ig_eps.alpha,
            fit.state.ig_eps.beta,
        )];
        variances.extend(
            fit.state
                .ig
                .iter()
                .enumerate()
                .map(|(h, q)| ig(format!("sigma2_{}", h + 1), q.alpha, q.beta)),
        );
        Self {
            schema_version: SCHEMA_VERSION,
            engine: engine.into(),
            loss: LossEntry {
                family: spec.family().to_string(),
                tau: spec.tau(),
                eps: spec.eps(),
            },
            phi,
            seed,
            n: design.n(),
            converged: fit.converged,
            iterations: fit.iterations,
            final_elbo: fit.final_elbo(),
            wall_time_seconds: fit.wall_time.as_secs_f64(),
            coefficients,
            variances,
            diagnostics: fit.diagnostics.clone(),
        }
    }
}
