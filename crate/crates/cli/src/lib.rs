//! `sdcons`: gain design, certification, batch simulation and parameter sweeps
//! for sampled-data consensus of double-integrator networks.

pub mod commands;
pub mod config;
pub mod graph_file;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sdcons_core::sim::SimError;

pub use config::ExperimentConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const REFUTED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const INCONCLUSIVE: i32 = 3;
    pub const UNCERTIFIED: i32 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, message)
    }

    pub fn from_sim(e: SimError) -> Self {
        match e {
            SimError::Uncertified(c) => Self::new(
                exit::UNCERTIFIED,
                format!(
                    "gain is not certified ({}, worst sigma {} at h = {}); rerun with --force to simulate anyway",
                    c.verdict.as_str(),
                    c.worst_sigma,
                    c.worst_h
                ),
            ),
            other => Self::config(other.to_string()),
        }
    }

    pub fn io(what: &std::path::Path, e: std::io::Error) -> Self {
        Self::config(format!("{}: {e}", what.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "sdcons", version, about = "Sampled-data consensus design, certification and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design a consensus gain for a sampling bound and eigenvalue band.
    Design(DesignArgs),
    /// Certify a gain against a topology set; exit 0 certified, 1 refuted, 3 inconclusive.
    Certify(CertifyArgs),
    /// Run a seeded simulation batch and write CSV trajectories.
    Simulate(SimulateArgs),
    /// Tabulate feasibility and certificate margin over hbar and lambdaN/lambda2.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub hbar: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda2: f64,
    #[arg(long = "lambdaN", allow_negative_numbers = true)]
    pub lambda_n: f64,
}

#[derive(Debug, Args)]
pub struct MuArgs {
    /// Transform parameter mu1 (with --mu2); defaults to the standard choice.
    #[arg(long, requires = "mu2", allow_negative_numbers = true)]
    pub mu1: Option<f64>,
    #[arg(long, requires = "mu1", allow_negative_numbers = true)]
    pub mu2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub mu: MuArgs,
    /// Print the design as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Experiment config; otherwise give --hbar, --lambda2 and --lambdaN.
    #[arg(long, conflicts_with_all = ["hbar", "lambda2", "lambda_n", "gain"])]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub hbar: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda2: Option<f64>,
    #[arg(long = "lambdaN", allow_negative_numbers = true)]
    pub lambda_n: Option<f64>,
    /// Explicit gain `k1,k2` instead of the designed one.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "k1,k2")]
    pub gain: Option<Vec<f64>>,
    #[command(flatten)]
    pub mu: MuArgs,
    /// Grid points per axis (overrides the config).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Simulate even when the gain is not certified.
    #[arg(long)]
    pub force: bool,
    /// Fail unless the final aggregate disagreement is at most r times the initial one.
    #[arg(long, value_name = "r")]
    pub assert_convergence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Optional config supplying lambda2 and the certificate grid.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// hbar axis: `lo:hi:count` or a single value.
    #[arg(long)]
    pub hbar: String,
    /// lambdaN / lambda2 axis: `lo:hi:count` or a single value.
    #[arg(long)]
    pub ratio: String,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda2: Option<f64>,
    #[command(flatten)]
    pub mu: MuArgs,
    #[arg(long)]
    pub grid: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Design(a) => commands::design(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
