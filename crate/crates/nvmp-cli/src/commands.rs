use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use nvmp::baselines::rwm::parameter_names;
use nvmp::quadrature::{PsiQuadrature, ORACLE_ORDER, PRODUCTION_ORDER};
use nvmp::simlab::{compare_methods, parse_methods, CompareOptions};
use nvmp::{
    fit_svmp, fit_vmp, read_dataset, simulate as simulate_dataset, write_dataset, Dataset,
    FitOptions, LossFamily, LossSpec, PriorConfig, PsiEvaluator, RwmOptions, SimConfig, SimFamily,
    StochasticOptions,
};

use crate::config::Settings;
use crate::report::Report;

type Outcome = Result<ExitCode, String>;

fn err(e: nvmp::Error) -> String {
    e.to_string()
}

fn loss_spec(s: &Settings) -> Result<LossSpec<f64>, String> {
    let family: LossFamily = s
        .loss
        .as_deref()
        .unwrap_or("quantile")
        .parse()
        .map_err(err)?;
    let tau = if family.uses_tau() {
        Some(s.tau.unwrap_or(0.5))
    } else {
        s.tau
    };
    let eps = if family.uses_eps() {
        Some(s.eps.unwrap_or(0.1))
    } else {
        s.eps
    };
    LossSpec::new(family, tau, eps).map_err(err)
}

fn prior(s: &Settings, h: usize) -> PriorConfig<f64> {
    let d = PriorConfig::<f64>::with_defaults(h);
    PriorConfig {
        sigma2_beta: s.sigma2_beta.unwrap_or(d.sigma2_beta),
        a_eps: s.a_eps.unwrap_or(d.a_eps),
        b_eps: s.b_eps.unwrap_or(d.b_eps),
        a: vec![s.a_h.unwrap_or(d.a_eps); h],
        b: vec![s.b_h.unwrap_or(d.b_eps); h],
        phi: s.phi.unwrap_or(d.phi),
    }
}

fn fit_options(s: &Settings) -> FitOptions<f64> {
    let d = FitOptions::default();
    FitOptions {
        max_iter: s.max_iter.unwrap_or(d.max_iter),
        tol: s.tol.unwrap_or(d.tol),
        quad_order: s.quad_order.unwrap_or(PRODUCTION_ORDER),
        seed: s.seed.unwrap_or(0),
        max_halvings: s.max_halvings.unwrap_or(d.max_halvings),
        ..d
    }
}

/// The default minibatch is capped at n; an explicit one is validated as given.
fn stochastic_options(s: &Settings, n: usize) -> StochasticOptions<f64> {
    let d = StochasticOptions::default();
    StochasticOptions {
        minibatch: s.minibatch.unwrap_or(d.minibatch.min(n)),
        rho0: s.rho0.unwrap_or(d.rho0),
        iterations: s.iters.unwrap_or(d.iterations),
        seed: s.seed.unwrap_or(0),
        elbo_every: s.elbo_every.unwrap_or(d.elbo_every),
        quad_order: s.quad_order.unwrap_or(PRODUCTION_ORDER),
    }
}

/// Reads the dataset, recoding 0/1 labels to ±1 for the margin losses.
fn load(s: &Settings, spec: &LossSpec<f64>) -> Result<Dataset<f64>, String> {
    let dir = s.data.as_ref().ok_or("--data is required")?;
    let ds = read_dataset::<f64>(dir).map_err(err)?;
    if spec.family().is_classification() && ds.y.iter().all(|v| *v == 0.0 || *v == 1.0) {
        return ds.recode_pm1().map_err(err);
    }
    Ok(ds)
}

fn out_dir(s: &Settings) -> Result<PathBuf, String> {
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

pub fn fit(s: &Settings) -> Outcome {
    let spec = loss_spec(s)?;
    let ds = load(s, &spec)?;
    let pr = prior(s, ds.design.h());
    let seed = s.seed.unwrap_or(0);
    let (engine, rep) = if s.stochastic.unwrap_or(false) {
        let opts = stochastic_options(s, ds.n());
        (
            "svmp",
            fit_svmp(&ds.design, &ds.y, &pr, &spec, &opts, None).map_err(err)?,
        )
    } else {
        (
            "vmp",
            fit_vmp(&ds.design, &ds.y, &pr, &spec, &fit_options(s), None).map_err(err)?,
        )
    };
    let dir = out_dir(s)?;
    let report = Report::new(engine, &spec, pr.phi, seed, &ds, &rep);
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    write_file(&dir.join("report.json"), &(json + "\n"))?;
    let mut trace = String::from("iteration,elbo\n");
    for (k, e) in rep.trace_steps.iter().zip(&rep.elbo_trace) {
        writeln!(trace, "{k},{e:?}").expect("string write");
    }
    write_file(&dir.join("elbo_trace.csv"), &trace)?;
    if rep.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("nvmp: not converged after {} iterations", rep.iterations);
        Ok(ExitCode::from(2))
    }
}

pub fn simulate(s: &Settings) -> Outcome {
    let family: SimFamily = s
        .family
        .as_deref()
        .unwrap_or("heteroscedastic")
        .parse()
        .map_err(err)?;
    let mut cfg = SimConfig::new(
        family,
        s.n.unwrap_or(500),
        s.d.unwrap_or(10),
        s.seed.unwrap_or(0),
    );
    cfg.sigma = s.sigma.unwrap_or(cfg.sigma);
    cfg.dof = s.dof.unwrap_or(cfg.dof);
    let ds = simulate_dataset::<f64>(&cfg).map_err(err)?;
    let dir = s.out.as_ref().ok_or("--out is required for simulate")?;
    write_dataset(&ds, dir).map_err(err)?;
    if s.with_truth.unwrap_or(false) {
        let mut text = String::from("name,index,value\n");
        for (name, values) in ds.truth.iter().flatten() {
            for (i, v) in values.iter().enumerate() {
                writeln!(text, "{name},{},{v:?}", i + 1).expect("string write");
            }
        }
        print!("{text}");
    }
    Ok(ExitCode::SUCCESS)
}

pub const PSI_HEADER: &str = "y,m,nu,psi0,psi1,psi2,psi0_quad,psi1_quad,psi2_fd";

pub fn psi(s: &Settings) -> Outcome {
    let spec = loss_spec(s)?;
    let default_y = if spec.family().is_classification() {
        vec![1.0]
    } else {
        vec![0.0]
    };
    let ys = s.y.clone().unwrap_or(default_y);
    let ms =
        s.m.clone()
            .unwrap_or_else(|| vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    let nus = s.nu.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let closed = PsiEvaluator::new(spec, s.quad_order.unwrap_or(PRODUCTION_ORDER)).map_err(err)?;
    let quad = PsiQuadrature::new(s.quad_order.unwrap_or(ORACLE_ORDER)).map_err(err)?;
    let mut text = format!("{PSI_HEADER}\n");
    for &y in &ys {
        for &m in &ms {
            for &nu in &nus {
                let t = closed.triple(y, m, nu).map_err(err)?;
                let q0 = quad.psi0(&spec, y, m, nu).map_err(err)?;
                let q1 = quad.psi1(&spec, y, m, nu).map_err(err)?;
                let h = 1e-3 * nu;
                let up = quad.psi1(&spec, y, m + h, nu).map_err(err)?;
                let down = quad.psi1(&spec, y, m - h, nu).map_err(err)?;
                let fd = (up - down) / (2.0 * h);
                writeln!(
                    text,
                    "{y:?},{m:?},{nu:?},{:?},{:?},{:?},{q0:?},{q1:?},{fd:?}",
                    t.psi0, t.psi1, t.psi2
                )
                .expect("string write");
            }
        }
    }
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn compare(s: &Settings) -> Outcome {
    let spec = loss_spec(s)?;
    let methods = parse_methods(s.methods.as_deref().unwrap_or("vmp,rwm")).map_err(err)?;
    let ds = load(s, &spec)?;
    let pr = prior(s, ds.design.h());
    let seed = s.seed.unwrap_or(0);
    let rd = RwmOptions::default();
    let opts = CompareOptions {
        fit: fit_options(s),
        stochastic: stochastic_options(s, ds.n()),
        rwm: RwmOptions {
            draws: s.draws.unwrap_or(rd.draws),
            burn: s.burn.unwrap_or(rd.burn),
            step_scale: s.step_scale.unwrap_or(rd.step_scale),
            seed,
            ..rd
        },
    };
    let rows = compare_methods(&ds.design, &ds.y, &pr, &spec, &methods, &opts).map_err(err)?;
    let names = parameter_names(&ds.design);
    let mut text = String::from("method,iterations,converged,wall_time,elbo,mean_accuracy");
    for n in &names {
        write!(text, ",acc_{n}").expect("string write");
    }
    text.push('\n');
    for r in &rows {
        write!(
            text,
            "{},{},{},{},{},{}",
            r.method,
            r.iterations,
            r.converged,
            cell(r.wall_time),
            cell(r.elbo),
            cell(r.mean_accuracy)
        )
        .expect("string write");
        for j in 0..names.len() {
            write!(
                text,
                ",{}",
                r.accuracy
                    .get(j)
                    .map_or(String::new(), |v| format!("{v:?}"))
            )
            .expect("string write");
        }
        text.push('\n');
    }
    write_file(&out_dir(s)?.join("compare.csv"), &text)?;
    Ok(ExitCode::SUCCESS)
}
