//! `nvmp`: fit, simulate, compare and Ψ-table commands.

mod commands;
mod config;
mod report;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "nvmp",
    about = "Variational message passing for generalized mixed regression",
    disable_version_flag = true
)]
struct Cli {
    /// Flat JSON file of settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Quadrature order for the numerically integrated losses.
    #[arg(long, global = true)]
    quad_order: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a dataset directory.
    Fit(FitArgs),
    /// Write a synthetic dataset directory.
    Simulate(SimulateArgs),
    /// Print closed-form and quadrature Ψ values on a grid.
    Psi(PsiArgs),
    /// Run several methods on one dataset and score them against the chain.
    Compare(CompareArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args, Serialize)]
pub struct LossArgs {
    /// quantile, expectile, huber_regression, huber_classification, svr, svc or logistic.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PriorArgs {
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub sigma2_beta: Option<f64>,
    #[arg(long)]
    pub a_eps: Option<f64>,
    #[arg(long)]
    pub b_eps: Option<f64>,
    #[arg(long)]
    pub a_h: Option<f64>,
    #[arg(long)]
    pub b_h: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct BatchArgs {
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Step halvings per iteration; 0 disables the ELBO safeguard.
    #[arg(long)]
    pub max_halvings: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct StochasticArgs {
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub elbo_every: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub batch: BatchArgs,
    /// Use the stochastic engine.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub stochastic: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sto: StochasticArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// heteroscedastic, student_t or bernoulli.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of groups.
    #[arg(long)]
    pub d: Option<usize>,
    /// Scale of the t-model.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Degrees of freedom of the t-model.
    #[arg(long)]
    pub dof: Option<f64>,
    /// Print the generating parameters.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub with_truth: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
pub struct PsiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    /// Comma-separated responses.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Option<Vec<f64>>,
    /// Comma-separated predictor means.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m: Option<Vec<f64>>,
    /// Comma-separated predictor sds.
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated subset of vmp, svmp, mfvb, rwm.
    #[arg(long)]
    pub methods: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sto: StochasticArgs,
    /// Chain length after burn-in.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub step_scale: Option<f64>,
}

#[derive(Serialize)]
struct Globals {
    seed: Option<u64>,
    out: Option<PathBuf>,
    quad_order: Option<usize>,
}

#[derive(Serialize)]
struct WithGlobals<'a, A> {
    #[serde(flatten)]
    args: &'a A,
    #[serde(flatten)]
    globals: &'a Globals,
}

/// Config keys accepted by a subcommand: its own flags plus the global ones.
fn allowed_keys(name: &str) -> BTreeSet<String> {
    let root = Cli::command();
    let sub = root.find_subcommand(name).expect("known subcommand");
    root.get_arguments()
        .chain(sub.get_arguments())
        .map(|a| a.get_id().to_string())
        .filter(|id| id != "config" && id != "help")
        .collect()
}

fn settings<A: Serialize>(name: &str, cli: &Cli, args: &A) -> Result<config::Settings, String> {
    let globals = Globals {
        seed: cli.seed,
        out: cli.out.clone(),
        quad_order: cli.quad_order,
    };
    config::merge(
        name,
        cli.config.as_deref(),
        &WithGlobals {
            args,
            globals: &globals,
        },
        &allowed_keys(name),
    )
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Fit(a) => commands::fit(&settings("fit", cli, a)?),
        Command::Simulate(a) => commands::simulate(&settings("simulate", cli, a)?),
        Command::Psi(a) => commands::psi(&settings("psi", cli, a)?),
        Command::Compare(a) => commands::compare(&settings("compare", cli, a)?),
        Command::Version => {
            println!(
                "nvmp {} (report schema {})",
                env!("CARGO_PKG_VERSION"),
                report::SCHEMA_VERSION
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("nvmp: error: {}", msg.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
