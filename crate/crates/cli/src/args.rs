use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sle_lab::diffusion::{DEFAULT_ABSORB_TOL, DEFAULT_DS_MAX};
use sle_lab::loewner::DEFAULT_DT;
use sle_lab::records::{parse_count_list, parse_real_list};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 1729;

#[derive(Debug, Parser)]
#[command(name = "sle-lab", version, about = "Two-sided SLE derivative exponents: closed forms, Monte Carlo and PDE checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate intersection exponents and lambda_kappa.
    Exponents(ExponentsArgs),
    /// Estimate h1 with the Loewner chain.
    SimLoewner(LoewnerArgs),
    /// Estimate h1 and hG by simulating the boundary diffusion.
    SimDiffusion(DiffusionArgs),
    /// Solve the backward equation on a grid.
    SolvePde(PdeArgs),
    /// Residual of the closed-form eigenpair.
    EigenCheck(EigenArgs),
    /// Checkpoint means of the Feynman-Kac martingale.
    MartingaleCheck(MartingaleArgs),
    /// Non-intersection probabilities of random-walk packs.
    Walkers(WalkerArgs),
    /// Merge result files into a pass/fail table.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Exponents(_) => "exponents",
            Command::SimLoewner(_) => "sim-loewner",
            Command::SimDiffusion(_) => "sim-diffusion",
            Command::SolvePde(_) => "solve-pde",
            Command::EigenCheck(_) => "eigen-check",
            Command::MartingaleCheck(_) => "martingale-check",
            Command::Walkers(_) => "walkers",
            Command::Report(_) => "report",
        }
    }
}

/// A comma- or space-separated list given as one argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

fn real_list(s: &str) -> Result<List<f64>, String> {
    parse_real_list(s).map(List).map_err(|e| e.to_string())
}

fn count_list(s: &str) -> Result<List<u32>, String> {
    parse_count_list(s).map(List).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunOpts {
    /// Worker threads; SLE_LAB_THREADS overrides.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    pub format: FileFormat,
    /// Exit with status 4 if the acceptance thresholds are not met.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Weights {
    #[arg(long, default_value_t = 6.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w2: f64,
}

/// Evaluation times: `--s` for one, `--s-grid` for several.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Times {
    #[arg(long, conflicts_with = "s_grid")]
    pub s: Option<f64>,
    /// Comma-separated increasing times.
    #[arg(long, value_parser = real_list)]
    pub s_grid: Option<List<f64>>,
}

impl Times {
    pub fn resolve(&self, default: f64) -> Vec<f64> {
        match (&self.s, &self.s_grid) {
            (_, Some(g)) => g.0.clone(),
            (Some(s), None) => vec![*s],
            (None, None) => vec![default],
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExponentsArgs {
    /// Full-plane exponent xi(w_1, ..., w_k).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub xi: Option<Vec<f64>>,
    /// Half-plane exponent xi_tilde(w_1, ..., w_k).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub xi_tilde: Option<Vec<f64>>,
    /// With --w1/--w2, print lambda_kappa and the boundary exponents.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, requires = "kappa")]
    pub w1: Option<f64>,
    #[arg(long, requires = "kappa")]
    pub w2: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LoewnerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: Weights,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub times: Times,
    /// Estimate H(a, R) on a grid of log R values instead.
    #[arg(long, value_parser = real_list, conflicts_with_all = ["s", "s_grid"])]
    pub logr_grid: Option<List<f64>>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    /// Capacity step relative to the squared width of the tracked interval.
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiffusionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: Weights,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub times: Times,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = DEFAULT_DS_MAX)]
    pub ds_max: f64,
    #[arg(long, default_value_t = DEFAULT_ABSORB_TOL)]
    pub absorb_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    One,
    G,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PdeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: Weights,
    /// Point at which the solution is reported.
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub times: Times,
    #[arg(long, default_value_t = 801)]
    pub nx: usize,
    #[arg(long, default_value_t = 1600)]
    pub ns: usize,
    #[arg(long, value_enum, default_value_t = Initial::One)]
    pub initial: Initial,
    /// Also write the whole grid as a CSV matrix.
    #[arg(long)]
    pub dump_grid: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: Weights,
    /// Exit with status 4 unless the residual is below 1e-10.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MartingaleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub weights: Weights,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    /// Horizon s0.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Checkpoints below s0; default s0 * (1/4, 1/2, 3/4).
    #[arg(long, value_parser = real_list)]
    pub s_grid: Option<List<f64>>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = DEFAULT_DS_MAX)]
    pub ds_max: f64,
    #[arg(long, default_value_t = DEFAULT_ABSORB_TOL)]
    pub absorb_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WalkerArgs {
    /// Pack sizes, e.g. 1,1.
    #[arg(long, value_parser = count_list, default_value = "1,1")]
    pub packs: List<u32>,
    /// Splitting radii, each at least twice the previous.
    #[arg(long, value_parser = count_list, default_value = "4,8,16,32,64,128")]
    pub radii: List<u32>,
    #[arg(long, default_value_t = 10_000)]
    pub population: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Result files (CSV or JSON).
    pub paths: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
    pub format: TableFormat,
    /// Exit with status 4 if any row fails.
    #[arg(long)]
    pub check: bool,
}
