//! Runs the requested tests and renders the report.

use std::fmt::Write;

use dosemono::conditional::run_conditional_test;
use dosemono::test::{run_test_with, RawTreatment};
use dosemono::{Direction, Estimator, TestConfig, TestResult};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{ingest_csv, IngestReport, Ingested};
use crate::spec::RunSpec;

/// One tested null. The key set is the same for every estimator and
/// direction; fields that do not apply are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullReport {
    pub null: Direction,
    pub statistic: f64,
    pub p_value: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub n: usize,
    pub q_max: u32,
    pub num_moments: usize,
    pub gms_active_count: usize,
    pub trimmed_fraction: f64,
    pub fallback_rows: usize,
    pub degenerate_scale: bool,
    pub bandwidth: Option<f64>,
    pub a_n: f64,
    pub b_n: f64,
    pub seed: u64,
}

impl From<&TestResult> for NullReport {
    fn from(r: &TestResult) -> Self {
        let d = &r.diagnostics;
        NullReport {
            null: r.direction,
            statistic: r.statistic,
            p_value: r.p_value,
            critical_value: r.critical_value,
            reject: r.reject,
            alpha: r.alpha,
            n: d.n,
            q_max: r.q_max,
            num_moments: d.num_moments,
            gms_active_count: r.gms_active_count,
            trimmed_fraction: d.trimmed_fraction,
            fallback_rows: d.fallback_rows,
            degenerate_scale: d.degenerate_scale,
            bandwidth: d.bandwidth,
            a_n: d.a_n,
            b_n: d.b_n,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: RunSpec,
    pub ingest: IngestReport,
    pub conditional: bool,
    pub results: Vec<NullReport>,
}

/// Runs every requested direction on already ingested data.
pub fn run_ingested(spec: &RunSpec, ing: &Ingested) -> Result<RunReport> {
    let raw = RawTreatment {
        t: &ing.raw_t,
        jacobian: ing.range.width(),
    };
    let results = spec
        .directions
        .iter()
        .map(|&direction| {
            let cfg = TestConfig { direction, ..spec.config.clone() };
            let r = if spec.conditional_on.is_some() {
                run_conditional_test(&ing.data, &cfg)?
            } else {
                let raw = matches!(spec.estimator, Estimator::Parametric(_)).then_some(raw);
                run_test_with(&ing.data, &cfg, spec.estimator, raw)?
            };
            Ok(NullReport::from(&r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        spec: spec.clone(),
        ingest: ing.report.clone(),
        conditional: spec.conditional_on.is_some(),
        results,
    })
}

pub fn run(spec: &RunSpec) -> Result<RunReport> {
    let ing = ingest_csv(&spec.input, spec)?;
    run_ingested(spec, &ing)
}

fn null_name(d: Direction) -> &'static str {
    match d {
        Direction::Increasing => "increasing",
        Direction::Decreasing => "decreasing",
    }
}

pub fn render_text(report: &RunReport) -> String {
    let s = &report.spec;
    let mut out = String::new();
    let estimator = match s.estimator {
        Estimator::Nonparametric => "nonparametric".to_string(),
        Estimator::Parametric(f) => format!("parametric ({f:?})"),
    };
    let _ = writeln!(out, "outcome `{}`, treatment `{}`, {estimator} propensity score", s.outcome, s.treatment);
    if let Some(c) = &s.conditional_on {
        let _ = writeln!(out, "conditional on `{c}`");
    }
    for line in report.ingest.lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12} {:>12} {:>9} {:>12}  decision", "H0", "stat", "p-value", "crit");
    for r in &report.results {
        let decision = if r.reject { "reject" } else { "do not reject" };
        let _ = writeln!(
            out,
            "{:<12} {:>12.4} {:>9.4} {:>12.4}  {decision}",
            null_name(r.null),
            r.statistic,
            r.p_value,
            r.critical_value
        );
    }
    if let Some(r) = report.results.first() {
        let _ = writeln!(out);
        let bw = r.bandwidth.map_or("n/a".to_string(), |h| format!("{h:.4}"));
        let _ = writeln!(
            out,
            "n {}, alpha {}, {} bootstrap draws, seed {}, q_max {} ({} moments), bandwidth {bw}",
            r.n, r.alpha, s.config.n_boot, r.seed, r.q_max, r.num_moments
        );
        let trim = s.config.trim.map_or("none".to_string(), |t| t.to_string());
        let _ = writeln!(
            out,
            "trim {trim}: {:.2}% of propensity estimates floored; {} rows with kernel fallback{}",
            100.0 * r.trimmed_fraction,
            r.fallback_rows,
            if r.degenerate_scale { "; degenerate scale (all influence values zero)" } else { "" }
        );
    }
    out
}

pub fn render_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
