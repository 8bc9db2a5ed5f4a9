//! Resolution of the effective run specification.

use std::path::{Path, PathBuf};

use dosemono::{Direction, Estimator, KernelOrder, ParametricFamily, TestConfig};
use serde::{Deserialize, Serialize};

use crate::args::{DirectionArg, EstimatorArg, FamilyArg, FormatArg, RunArgs};
use crate::error::{CliError, Result};

/// CLI default floor on the estimated propensity.
pub const DEFAULT_TRIM: f64 = 1e-4;

/// Options accepted in a JSON config file; names match the long flags with
/// `-` replaced by `_`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub outcome: Option<String>,
    pub treatment: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub range: Option<(f64, f64)>,
    pub direction: Option<DirectionArg>,
    pub estimator: Option<EstimatorArg>,
    pub family: Option<FamilyArg>,
    pub alpha: Option<f64>,
    pub boot: Option<usize>,
    pub trim: Option<f64>,
    pub bandwidth_scale: Option<f64>,
    pub kernel_order: Option<u32>,
    pub min_cube_count: Option<usize>,
    pub q_max: Option<u32>,
    pub seed: Option<u64>,
    pub format: Option<FormatArg>,
    pub conditional_on: Option<String>,
    pub delimiter: Option<char>,
    pub standardize: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Effective configuration of one `run`, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub input: PathBuf,
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub range: Option<(f64, f64)>,
    pub directions: Vec<Direction>,
    pub estimator: Estimator,
    pub config: TestConfig,
    pub format: FormatArg,
    pub conditional_on: Option<String>,
    #[serde(with = "delimiter_char")]
    pub delimiter: u8,
    pub standardize: bool,
}

mod delimiter_char {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_char(*d as char)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
        let c = char::deserialize(d)?;
        u8::try_from(c).map_err(serde::de::Error::custom)
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).ok_or_else(|| CliError::Config(format!("--{name} is required (flag or config file)")))
}

impl RunSpec {
    /// Merges flags over the config file (if any) over defaults.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        RunSpec::merge(args, file)
    }

    pub fn merge(args: &RunArgs, file: FileConfig) -> Result<Self> {
        let a = args.clone();
        let range = match (a.range, file.range) {
            (Some(v), _) => Some((v[0], v[1])),
            (None, r) => r,
        };
        let directions = match a.direction.or(file.direction).unwrap_or(DirectionArg::Both) {
            DirectionArg::Inc => vec![Direction::Increasing],
            DirectionArg::Dec => vec![Direction::Decreasing],
            DirectionArg::Both => vec![Direction::Increasing, Direction::Decreasing],
        };
        let family = match a.family.or(file.family).unwrap_or(FamilyArg::Lognormal) {
            FamilyArg::Lognormal => ParametricFamily::LogNormal,
            FamilyArg::Normal => ParametricFamily::Normal,
        };
        let estimator = match a.estimator.or(file.estimator).unwrap_or(EstimatorArg::Np) {
            EstimatorArg::Np => Estimator::Nonparametric,
            EstimatorArg::Pa => Estimator::Parametric(family),
        };
        let conditional_on = a.conditional_on.or(file.conditional_on);
        if conditional_on.is_some() && estimator != Estimator::Nonparametric {
            return Err(CliError::Config("the conditional test is only available with --estimator np".into()));
        }
        let trim = a.trim.or(file.trim).unwrap_or(DEFAULT_TRIM);
        let defaults = TestConfig::default();
        let kernel_order = match a.kernel_order.or(file.kernel_order) {
            Some(r) => KernelOrder::from_order(r)?,
            None => defaults.kernel_order,
        };
        let config = TestConfig {
            alpha: a.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            n_boot: a.boot.or(file.boot).unwrap_or(defaults.n_boot),
            trim: (trim > 0.0).then_some(trim),
            bandwidth_scale: a.bandwidth_scale.or(file.bandwidth_scale).unwrap_or(defaults.bandwidth_scale),
            kernel_order,
            min_cube_count: a.min_cube_count.or(file.min_cube_count).unwrap_or(defaults.min_cube_count),
            q_max: a.q_max.or(file.q_max),
            seed: a.seed.or(file.seed).unwrap_or(defaults.seed),
            ..defaults
        };
        config.validate()?;
        let delimiter = a.delimiter.or(file.delimiter).unwrap_or(',');
        let delimiter = u8::try_from(delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| CliError::Config(format!("delimiter must be a single ASCII character, got {delimiter:?}")))?;
        Ok(RunSpec {
            input: required(a.input, file.input, "input")?,
            outcome: required(a.outcome, file.outcome, "outcome")?,
            treatment: required(a.treatment, file.treatment, "treatment")?,
            covariates: a.covariates.or(file.covariates).unwrap_or_default(),
            range,
            directions,
            estimator,
            config,
            format: a.format.or(file.format).unwrap_or(FormatArg::Text),
            conditional_on,
            delimiter,
            standardize: !a.no_standardize && file.standardize.unwrap_or(true),
        })
    }
}
