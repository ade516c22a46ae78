//! `gflow` — command-line harness for the gradient-flow scheme library.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure
//! (partial outputs still written), 4 certificate inconclusive.

// Guards written as `!(x > 0.0)` must stay NaN-rejecting.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod parallel;
mod svg;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "gflow",
    version,
    about = "Energy-dissipative time discretizations of gradient flows: runs, rate sweeps, scheme comparisons, residual certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV (plus a JSON summary).
    Run(RunArgs),
    /// Sweep step sizes, report sup-norm errors and fitted convergence rates.
    Rates(RatesArgs),
    /// Reproduce the scalar scheme comparison: potential decay along
    /// iterations and reduction after a fixed iteration count.
    Compare(CompareArgs),
    /// Evaluate the a-posteriori residual certificate of trajectory CSVs.
    Certify(CertifyArgs),
}

#[derive(Debug, Args)]
struct SolverOpts {
    /// Inner solver residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Maximum inner solver iterations per step.
    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
}

impl SolverOpts {
    fn settings(&self) -> gflow_core::SolverSettings {
        gflow_core::SolverSettings {
            tol_residual: self.tol,
            max_iterations: self.max_iter,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scheme: euler | gonzalez | dg-root:near | dg-root:far | dg-min
    /// (in --mode gen/metric: euler | dg).
    #[arg(long)]
    scheme: Option<String>,
    /// Potential spec: quad1d:λ | aniso2d | radial:λ:d | logistic | obstacle.
    #[arg(long)]
    potential: Option<String>,
    /// Extension mode: gen:p:β | generic:γ | metric:euclidean |
    /// metric:scaled:factor.
    #[arg(long)]
    mode: Option<String>,
    /// Initial state, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    u0: Vec<f64>,
    /// Time horizon T.
    #[arg(long = "T")]
    horizon: f64,
    /// Number of uniform steps.
    #[arg(long)]
    steps: usize,
    /// Trajectory CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON run summary path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Seed for sampled structure checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Potential spec (must expose a closed-form exact flow).
    #[arg(long)]
    potential: String,
    /// Initial state, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    u0: Vec<f64>,
    /// Time horizon T.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    /// Schemes to sweep, comma-separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "euler,gonzalez,dg-root:far,dg-min"
    )]
    schemes: Vec<String>,
    /// Smallest dyadic level: τ = 2^{-k}.
    #[arg(long = "k-min", default_value_t = 3)]
    k_min: u32,
    /// Largest dyadic level.
    #[arg(long = "k-max", default_value_t = 10)]
    k_max: u32,
    /// Rate table CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON slopes path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Optional log-log SVG plot path.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Decay rate λ of the scalar quadratic potential.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// τλ values to compare at.
    #[arg(
        long = "tau-lambdas",
        value_delimiter = ',',
        default_value = "0.1,0.5,1,2,5,20,100"
    )]
    tau_lambdas: Vec<f64>,
    /// Iteration count per series.
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    /// Output path prefix for the emitted CSV/SVG files.
    #[arg(long = "out-prefix")]
    out_prefix: String,
    /// Also emit SVG plots next to the CSVs.
    #[arg(long, default_value_t = false)]
    svg: bool,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    /// Trajectory CSV, or a directory of CSVs forming a τ-sweep.
    #[arg(long = "in")]
    input: PathBuf,
    /// Potential spec the trajectory is certified against.
    #[arg(long)]
    potential: String,
    /// Optional JSON output path (always printed to stdout too).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => commands::run::execute(&args),
        Command::Rates(args) => commands::rates::execute(&args),
        Command::Compare(args) => commands::compare::execute(&args),
        Command::Certify(args) => commands::certify::execute(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("gflow: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
