//! Command-line front end: solve instances from files, generate random
//! instances, run the experiment grid, and verify the a posteriori bounds
//! against the exact projection oracle.
//!
//! Exit codes: 0 converged or all checks passed, 1 input error, 2 not
//! converged, 3 verification or internal failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qtp_core::io::Format;
use qtp_core::{VariantChoice, WarmStart};

mod commands;
pub mod config;
pub mod report;

pub use config::ConfigFile;
pub use report::{RunReport, RunRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] qtp_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Core(qtp_core::Error::OracleNotConverged { .. }) => EXIT_NOT_CONVERGED,
            CliError::Core(_) => EXIT_INPUT,
            CliError::Verification(_) | CliError::Internal(_) => EXIT_FAILURE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "qtp", version, about = "Quadratic transportation problem solver by alternating proportional scaling")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Worker threads used inside each solve.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fixed-order reductions, bit-identical across thread counts (default true).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file format: csv or bin. Inputs are detected automatically.
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Flat key = value file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance read from files.
    Solve(SolveArgs),
    /// Write a random instance.
    Generate(GenerateArgs),
    /// Run a grid of generated instances and print a report table.
    Experiment(ExperimentArgs),
    /// Check the objective and distance bounds against the exact oracle.
    Verify(VerifyArgs),
    /// Solve one instance exactly (desk scale).
    Oracle(OracleArgs),
    /// Print convergence diagnostics for an instance.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// Data matrix A.
    #[arg(long)]
    pub a: PathBuf,
    /// Row sums p.
    #[arg(long)]
    pub p: PathBuf,
    /// Column sums q.
    #[arg(long)]
    pub q: PathBuf,
    /// Optional lower-bound matrix d.
    #[arg(long)]
    pub d: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Where to write the solution matrix.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the report row as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    #[arg(long)]
    pub tol_abs: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// auto, row or col.
    #[arg(long)]
    pub variant: Option<VariantChoice>,
    /// plain or combined.
    #[arg(long)]
    pub warm_start: Option<WarmStart>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub zero_fraction: Option<f64>,
    #[arg(long)]
    pub turbulence: Option<f64>,
    /// Total mass s (default n * m).
    #[arg(long)]
    pub total_s: Option<f64>,
    /// Absolute V(A); overrides --v0-rel.
    #[arg(long)]
    pub target_v0: Option<f64>,
    /// V(A) as a fraction of s (default 0.1).
    #[arg(long)]
    pub v0_rel: Option<f64>,
    /// Directory receiving a, p and q.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Comma-separated NxM list.
    #[arg(long, default_value = "60x102,150x255,300x510,600x1020")]
    pub dims: String,
    #[arg(long, default_value = "0.07,0.25")]
    pub zero_fractions: String,
    #[arg(long)]
    pub turbulence: Option<f64>,
    /// V(A) as a fraction of s.
    #[arg(long)]
    pub v0_rel: Option<f64>,
    /// Comma-separated variants (row, col).
    #[arg(long, default_value = "row,col")]
    pub variants: String,
    /// Comma-separated warm starts (plain, combined).
    #[arg(long, default_value = "plain")]
    pub warm_starts: String,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Grid cells processed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Where to write the report as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Number of instances.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Fixed row count (random desk sizes when absent).
    #[arg(long)]
    pub n: Option<usize>,
    /// Fixed column count.
    #[arg(long)]
    pub m: Option<usize>,
    /// Largest n * m for random sizes.
    #[arg(long, default_value_t = 600)]
    pub max_entries: usize,
    #[arg(long)]
    pub oracle_tol: Option<f64>,
    #[arg(long)]
    pub oracle_max_iters: Option<usize>,
    #[arg(long)]
    pub oracle_size_limit: Option<usize>,
    /// Perturb each oracle solution so the checks must fail.
    #[arg(long)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub oracle_tol: Option<f64>,
    #[arg(long)]
    pub oracle_max_iters: Option<usize>,
    #[arg(long)]
    pub oracle_size_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// auto, row or col.
    #[arg(long)]
    pub variant: Option<VariantChoice>,
    /// Target V as a fraction of V(A) for the predicted iteration count.
    #[arg(long)]
    pub tol_rel: Option<f64>,
}

/// Runs `cli`, writing human-readable output to `out`. Returns the exit code
/// for runs that completed; errors carry their own code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let ctx = commands::Context::new(&cli.global, cfg)?;
    match cli.command {
        Command::Solve(a) => commands::solve(&ctx, a, out),
        Command::Generate(a) => commands::generate(&ctx, a, out),
        Command::Experiment(a) => commands::experiment(&ctx, a, out),
        Command::Verify(a) => commands::verify(&ctx, a, out),
        Command::Oracle(a) => commands::oracle(&ctx, a, out),
        Command::Analyze(a) => commands::analyze(&ctx, a, out),
    }
}
