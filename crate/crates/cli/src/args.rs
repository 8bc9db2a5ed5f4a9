//! Command-line arguments. Every run option is optional here so that a config
//! file can supply it; defaults are applied when the spec is resolved.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "dosemono", version, about = "Test whether an average dose-response function is monotone")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test the increasing and/or decreasing null on a delimited data file.
    Run(RunArgs),
    /// Monte-Carlo rejection-rate tables for the three simulation designs.
    Simulate(SimArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Inc,
    Dec,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Np,
    Pa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Lognormal,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any of the options below (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Delimited input file with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outcome column.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Treatment column.
    #[arg(long)]
    pub treatment: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Treatment range under test, in original units (default: observed min and max).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub range: Option<Vec<f64>>,
    /// Null hypothesis: weakly increasing, weakly decreasing, or both [default: both].
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Propensity estimator: nonparametric kernel or parametric MLE [default: np].
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Parametric family of T given X [default: lognormal].
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Significance level [default: 0.1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap replications [default: 1000].
    #[arg(long)]
    pub boot: Option<usize>,
    /// Floor on the estimated propensity; 0 disables trimming [default: 0.0001].
    #[arg(long)]
    pub trim: Option<f64>,
    /// `a` in the bandwidth `h = a n^(-1/5)` [default: 1].
    #[arg(long)]
    pub bandwidth_scale: Option<f64>,
    /// Kernel order, 2 or 4 [default: 4].
    #[arg(long)]
    pub kernel_order: Option<u32>,
    /// Minimum observations per treatment cell when choosing the truncation [default: 25].
    #[arg(long)]
    pub min_cube_count: Option<usize>,
    /// Fixed truncation, overriding the cell-count rule.
    #[arg(long)]
    pub q_max: Option<u32>,
    /// Bootstrap seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report format [default: text].
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Test monotonicity conditional on this (single) covariate.
    #[arg(long)]
    pub conditional_on: Option<String>,
    /// Field delimiter [default: ,].
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Keep covariates in original units for the kernel estimator.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum GridArg {
    /// DGP x n x {a = 0.8, 1, 1.2, pa}.
    #[default]
    Bandwidth,
    /// DGP x n x N in {33, 40, 50, 66}.
    CubeSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum TableFormatArg {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Which table layout to run.
    #[arg(long, value_enum, default_value_t)]
    pub grid: GridArg,
    /// Replications per cell.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Bootstrap draws per replication.
    #[arg(long, default_value_t = 200)]
    pub boot: usize,
    /// Full scale: 1000 replications x 1000 bootstrap draws (slow).
    #[arg(long)]
    pub full: bool,
    /// Propensity floor (0.05 reproduces the trimmed tables).
    #[arg(long)]
    pub trim: Option<f64>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restrict to these DGPs (repeatable).
    #[arg(long)]
    pub dgp: Vec<u8>,
    /// Restrict to these sample sizes (repeatable).
    #[arg(long)]
    pub n: Vec<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub format: TableFormatArg,
    /// Run replications on one thread.
    #[arg(long)]
    pub serial: bool,
}
