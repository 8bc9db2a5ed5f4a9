//! Simulation designs, the Monte-Carlo harness, and rejection-rate tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Estimator, ParametricFamily, TestConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::test::run_test;

/// Designs share `X ~ U[0,1]`, `T = X + 0.5 U_t`; they differ in `Y`:
///
/// * DGP 1: `Y = (X - 0.5) T + T^2 + X + U_y` (`mu(t) = t^2 + 1/2`, null holds)
/// * DGP 2: `Y = (X - 0.5) T + sin(pi T) + X + U_y` (`mu` rises then falls)
/// * DGP 3: `Y = U_y` (`mu = 0`, boundary of the null)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: u8,
    pub n: usize,
}

impl DgpSpec {
    pub fn new(id: u8, n: usize) -> Result<Self> {
        if !(1..=3).contains(&id) {
            return Err(Error::Config(format!("DGP id must be 1, 2 or 3, got {id}")));
        }
        if n == 0 {
            return Err(Error::Config("sample size must be positive".into()));
        }
        Ok(DgpSpec { id, n })
    }

    /// Average dose-response `mu(t)` on `[0, 1]`.
    pub fn dose_response(&self, t: f64) -> f64 {
        match self.id {
            1 => t * t + 0.5,
            2 => (std::f64::consts::PI * t).sin() + 0.5,
            _ => 0.0,
        }
    }

    /// `E[Y | T = t, X = x]`.
    pub fn regression(&self, t: f64, x: f64) -> f64 {
        match self.id {
            1 => (x - 0.5) * t + t * t + x,
            2 => (x - 0.5) * t + (std::f64::consts::PI * t).sin() + x,
            _ => 0.0,
        }
    }

    /// True conditional density of `T` given `X`.
    pub fn propensity(t: f64, x: f64) -> f64 {
        let z = (t - x) / 0.5;
        (-0.5 * z * z).exp() / (0.5 * (2.0 * std::f64::consts::PI).sqrt())
    }
}

pub fn generate<R: Rng + ?Sized>(spec: DgpSpec, rng: &mut R) -> Dataset {
    let mut y = Vec::with_capacity(spec.n);
    let mut t = Vec::with_capacity(spec.n);
    let mut x = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let xi: f64 = rng.random();
        let ut: f64 = StandardNormal.sample(rng);
        let uy: f64 = StandardNormal.sample(rng);
        let ti = xi + 0.5 * ut;
        y.push(spec.regression(ti, xi) + uy);
        t.push(ti);
        x.push(xi);
    }
    Dataset::new(y, t, x, 1).expect("generated sample is well formed")
}

/// Per-replication RNG: the data stream and the bootstrap seed both derive
/// from the master seed and the replication number.
pub fn replication_rng(master: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplication {
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub dgp: u8,
    pub n: usize,
    /// Column label in the rendered table, e.g. `a=1`, `pa`, `N=33`.
    pub column: String,
    pub estimator: Estimator,
    pub rejections: usize,
    /// Completed replications.
    pub n_reps: usize,
    pub rejection_rate: f64,
    pub failed: Vec<FailedReplication>,
    pub master_seed: u64,
    pub config: TestConfig,
}

/// Runs the test on `n_reps` independently seeded samples.
///
/// Parametric runs fit the correctly specified conditional normal family.
pub fn monte_carlo(
    spec: DgpSpec,
    cfg: &TestConfig,
    estimator: Estimator,
    n_reps: usize,
    parallel: bool,
) -> Result<McResult> {
    if n_reps == 0 {
        return Err(Error::Config("n_reps must be at least 1".into()));
    }
    cfg.validate()?;
    let one = |rep: usize| -> std::result::Result<bool, String> {
        let mut rng = replication_rng(cfg.seed, rep);
        let data = generate(spec, &mut rng);
        let rep_cfg = TestConfig { seed: rng.random(), ..cfg.clone() };
        run_test(&data, &rep_cfg, estimator).map(|r| r.reject).map_err(|e| e.to_string())
    };
    let outcomes: Vec<std::result::Result<bool, String>> = if parallel {
        (0..n_reps).into_par_iter().map(one).collect()
    } else {
        (0..n_reps).map(one).collect()
    };
    let mut rejections = 0;
    let mut failed = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => rejections += r as usize,
            Err(message) => failed.push(FailedReplication { rep, message }),
        }
    }
    let completed = n_reps - failed.len();
    Ok(McResult {
        dgp: spec.id,
        n: spec.n,
        column: column_label(cfg, estimator),
        estimator,
        rejections,
        n_reps: completed,
        rejection_rate: if completed == 0 { f64::NAN } else { rejections as f64 / completed as f64 },
        failed,
        master_seed: cfg.seed,
        config: cfg.clone(),
    })
}

fn column_label(cfg: &TestConfig, estimator: Estimator) -> String {
    match estimator {
        Estimator::Parametric(_) => "pa".into(),
        Estimator::Nonparametric => format!("a={}", cfg.bandwidth_scale),
    }
}

/// Truncation used for each sample size in the bandwidth tables.
pub fn table_q_max(n: usize) -> u32 {
    match n {
        0..=200 => 5,
        201..=400 => 10,
        _ => 20,
    }
}

/// Cells of the bandwidth grid: DGP x n x {a = 0.8, 1, 1.2, pa}.
pub fn bandwidth_grid(base: &TestConfig) -> Vec<(DgpSpec, TestConfig, Estimator, String)> {
    let mut cells = Vec::new();
    for id in 1..=3 {
        for n in [200, 400, 800] {
            let spec = DgpSpec { id, n };
            for a in [0.8, 1.0, 1.2] {
                let cfg = TestConfig { bandwidth_scale: a, q_max: Some(table_q_max(n)), ..base.clone() };
                cells.push((spec, cfg, Estimator::Nonparametric, format!("a={a}")));
            }
            let cfg = TestConfig { q_max: Some(table_q_max(n)), ..base.clone() };
            cells.push((spec, cfg, Estimator::Parametric(ParametricFamily::Normal), "pa".into()));
        }
    }
    cells
}

/// Cells of the cube-size grid: DGP x n x N in {33, 40, 50, 66}, np and pa.
pub fn cube_size_grid(base: &TestConfig) -> Vec<(DgpSpec, TestConfig, Estimator, String)> {
    let mut cells = Vec::new();
    for id in 1..=3 {
        for n in [200, 400, 800] {
            let spec = DgpSpec { id, n };
            for (est, tag) in [
                (Estimator::Nonparametric, "np"),
                (Estimator::Parametric(ParametricFamily::Normal), "pa"),
            ] {
                for big_n in [33, 40, 50, 66] {
                    let cfg = TestConfig {
                        bandwidth_scale: 1.0,
                        q_max: None,
                        min_cube_count: big_n,
                        ..base.clone()
                    };
                    cells.push((spec, cfg, est, format!("{tag} N={big_n}")));
                }
            }
        }
    }
    cells
}

/// Runs every cell of a grid, relabelling results with the grid's column names.
pub fn run_grid(
    cells: &[(DgpSpec, TestConfig, Estimator, String)],
    n_reps: usize,
    parallel: bool,
) -> Result<Vec<McResult>> {
    cells
        .iter()
        .map(|(spec, cfg, est, label)| {
            let mut r = monte_carlo(*spec, cfg, *est, n_reps, parallel)?;
            r.column = label.clone();
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Text,
    Json,
    Csv,
}

/// Renders rejection rates as a `(DGP, n) x column` grid.
pub fn emit_tables(results: &[McResult], format: TableFormat) -> String {
    let mut columns: Vec<&str> = Vec::new();
    for r in results {
        if !columns.contains(&r.column.as_str()) {
            columns.push(&r.column);
        }
    }
    let mut rows: BTreeMap<(u8, usize), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in results {
        rows.entry((r.dgp, r.n)).or_default().insert(&r.column, r.rejection_rate);
    }
    let cell = |row: &BTreeMap<&str, f64>, c: &str| row.get(c).map_or(String::new(), |v| format!("{v:.3}"));

    match format {
        TableFormat::Json => {
            let doc = serde_json::json!({ "columns": columns, "results": results });
            serde_json::to_string_pretty(&doc).expect("results serialize")
        }
        TableFormat::Csv => {
            let mut out = String::from("DGP,n");
            for c in &columns {
                out.push(',');
                out.push_str(c);
            }
            out.push('\n');
            for ((dgp, n), row) in &rows {
                let _ = write!(out, "{dgp},{n}");
                for c in &columns {
                    let _ = write!(out, ",{}", cell(row, c));
                }
                out.push('\n');
            }
            out
        }
        TableFormat::Text => {
            let width = columns.iter().map(|c| c.len()).max().unwrap_or(0).max(5);
            let mut out = format!("{:>3} {:>5}", "DGP", "n");
            for c in &columns {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
            for ((dgp, n), row) in &rows {
                let _ = write!(out, "{dgp:>3} {n:>5}");
                for c in &columns {
                    let _ = write!(out, " {:>width$}", cell(row, c));
                }
                out.push('\n');
            }
            if let Some(first) = results.first() {
                let _ = writeln!(
                    out,
                    "master seed {}, alpha {}, {} bootstrap draws, {} replications per cell",
                    first.master_seed, first.config.alpha, first.config.n_boot, first.n_reps
                );
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(DgpSpec::new(4, 10).is_err());
        assert!(DgpSpec::new(1, 0).is_err());
        assert!(DgpSpec::new(3, 10).is_ok());
    }

    #[test]
    fn dgp1_mean_outcome() {
        let d = generate(DgpSpec { id: 1, n: 1_000_000 }, &mut replication_rng(1, 0));
        let mean = d.y().iter().sum::<f64>() / d.n() as f64;
        assert!((mean - 7.0 / 6.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn dgp3_outcome_uncorrelated_with_treatment() {
        let d = generate(DgpSpec { id: 3, n: 1_000_000 }, &mut replication_rng(2, 0));
        let n = d.n() as f64;
        let (my, mt) = (d.y().iter().sum::<f64>() / n, d.t().iter().sum::<f64>() / n);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (y, t) in d.y().iter().zip(d.t()) {
            sxy += (y - my) * (t - mt);
            sxx += (t - mt) * (t - mt);
            syy += (y - my) * (y - my);
        }
        assert!((sxy / (sxx * syy).sqrt()).abs() < 0.01);
    }

    #[test]
    fn dgp2_band_means_fall_towards_the_right() {
        let d = generate(DgpSpec { id: 2, n: 1_000_000 }, &mut replication_rng(3, 0));
        let band = |c: f64| {
            let v: Vec<f64> = d.t().iter().zip(d.y()).filter(|(t, _)| (*t - c).abs() < 0.02).map(|(_, y)| *y).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(band(0.5) > band(0.95));
    }

    fn fake(dgp: u8, n: usize, column: &str, rate: f64) -> McResult {
        McResult {
            dgp,
            n,
            column: column.into(),
            estimator: Estimator::Nonparametric,
            rejections: (rate * 100.0) as usize,
            n_reps: 100,
            rejection_rate: rate,
            failed: vec![],
            master_seed: 5,
            config: TestConfig::default(),
        }
    }

    #[test]
    fn empty_table_has_headers() {
        let t = emit_tables(&[], TableFormat::Text);
        assert!(t.starts_with("DGP"));
        assert_eq!(emit_tables(&[], TableFormat::Csv), "DGP,n\n");
    }

    #[test]
    fn single_cell_table() {
        let r = [fake(2, 400, "a=1", 0.998)];
        let csv = emit_tables(&r, TableFormat::Csv);
        assert_eq!(csv, "DGP,n,a=1\n2,400,0.998\n");
        let txt = emit_tables(&r, TableFormat::Text);
        assert!(txt.lines().nth(1).unwrap().contains("0.998"));
        let json: serde_json::Value = serde_json::from_str(&emit_tables(&r, TableFormat::Json)).unwrap();
        assert_eq!(json["results"][0]["rejection_rate"], 0.998);
    }

    #[test]
    fn grids_have_expected_shapes() {
        let base = TestConfig::default();
        assert_eq!(bandwidth_grid(&base).len(), 36);
        assert_eq!(cube_size_grid(&base).len(), 72);
    }

    #[test]
    fn rows_are_sorted_and_columns_keep_first_seen_order() {
        let r = [fake(3, 200, "pa", 0.1), fake(1, 400, "a=1", 0.01), fake(1, 400, "pa", 0.0)];
        let csv = emit_tables(&r, TableFormat::Csv);
        assert_eq!(csv, "DGP,n,pa,a=1\n1,400,0.000,0.010\n3,200,0.100,\n");
    }
}
