//! Delimited-text ingestion: missing values, covariate imputation and
//! standardization, and treatment-range restriction.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use dosemono::data::rescale_treatment;
use dosemono::{Dataset, TreatmentRange};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::spec::RunSpec;

/// Everything the ingestion step did to the input, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped_missing_outcome: usize,
    pub dropped_missing_treatment: usize,
    pub dropped_missing_conditioning: usize,
    pub dropped_out_of_range: usize,
    pub rows_used: usize,
    pub treatment_range: (f64, f64),
    /// `(column, imputed count, median)` for covariates with missing values.
    pub imputed: Vec<(String, usize, f64)>,
    /// Missing-indicator columns appended after the covariates.
    pub indicator_columns: Vec<String>,
    /// `(column, mean, sd)` for standardized covariates.
    pub standardized: Vec<(String, f64, f64)>,
    /// `(column, min, max)` when a conditioning covariate is mapped onto `[0, 1]`.
    pub conditioning_scale: Option<(String, f64, f64)>,
    pub covariate_columns: Vec<String>,
}

impl IngestReport {
    /// One line per transformation, for the text report.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![format!("read {} rows, used {}", self.rows_read, self.rows_used)];
        let drops = [
            (self.dropped_missing_outcome, "missing outcome"),
            (self.dropped_missing_treatment, "missing treatment"),
            (self.dropped_missing_conditioning, "missing conditioning covariate"),
            (self.dropped_out_of_range, "treatment outside the range"),
        ];
        for (count, why) in drops {
            if count > 0 {
                out.push(format!("dropped {count} row{} ({why})", if count == 1 { "" } else { "s" }));
            }
        }
        let (lo, hi) = self.treatment_range;
        out.push(format!("treatment range [{lo}, {hi}] rescaled to [0, 1]"));
        for (col, count, median) in &self.imputed {
            out.push(format!("imputed {count} missing `{col}` values with the median {median}"));
        }
        if !self.indicator_columns.is_empty() {
            out.push(format!("appended missing indicators: {}", self.indicator_columns.join(", ")));
        }
        for (col, mean, sd) in &self.standardized {
            out.push(format!("standardized `{col}` (mean {mean:.6}, sd {sd:.6})"));
        }
        if let Some((col, lo, hi)) = &self.conditioning_scale {
            out.push(format!("conditioning covariate `{col}` mapped from [{lo}, {hi}] to [0, 1]"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// Testing-scale sample.
    pub data: Dataset,
    /// Treatments of the kept rows in original units.
    pub raw_t: Vec<f64>,
    pub range: TreatmentRange,
    pub report: IngestReport,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| CliError::NotNumeric {
        row,
        column: column.to_string(),
        value: s.to_string(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Reads the named columns, drops rows with a missing outcome or treatment,
/// imputes covariates, and maps the treatment range onto `[0, 1]`.
pub fn ingest_csv(path: &Path, spec: &RunSpec) -> Result<Ingested> {
    let file = File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().delimiter(spec.delimiter).has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };

    let covariates: Vec<String> = match &spec.conditional_on {
        Some(c) => vec![c.clone()],
        None => spec.covariates.clone(),
    };
    if covariates.is_empty() {
        return Err(CliError::Config("at least one covariate column is required".into()));
    }
    let y_col = find(&spec.outcome)?;
    let t_col = find(&spec.treatment)?;
    let x_cols = covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut report = IngestReport::default();
    let (mut y, mut t, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header
        report.rows_read += 1;
        let cell = |col: usize, name: &str| parse_cell(record.get(col).unwrap_or(""), row, name);
        let yi = cell(y_col, &spec.outcome)?;
        let ti = cell(t_col, &spec.treatment)?;
        let xi = x_cols
            .iter()
            .zip(&covariates)
            .map(|(&c, name)| cell(c, name))
            .collect::<Result<Vec<_>>>()?;
        match (yi, ti) {
            (None, _) => report.dropped_missing_outcome += 1,
            (_, None) => report.dropped_missing_treatment += 1,
            (Some(_), Some(_)) if spec.conditional_on.is_some() && xi[0].is_none() => {
                report.dropped_missing_conditioning += 1
            }
            (Some(yv), Some(tv)) => {
                y.push(yv);
                t.push(tv);
                x.push(xi);
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::Data("no rows left after dropping missing outcomes and treatments".into()));
    }

    let range = match spec.range {
        Some((lo, hi)) => TreatmentRange::new(lo, hi)?,
        None => {
            let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            TreatmentRange::new(lo, hi)
                .map_err(|_| CliError::Data("treatment is constant; supply --range".into()))?
        }
    };
    let rescaled = rescale_treatment(&t, range)?;
    report.dropped_out_of_range = rescaled.dropped;
    report.treatment_range = (range.t_lower, range.t_upper);
    if rescaled.kept.is_empty() {
        return Err(CliError::Data("no treatment values inside the range".into()));
    }
    let y: Vec<f64> = rescaled.kept.iter().map(|&i| y[i]).collect();
    let raw_t: Vec<f64> = rescaled.kept.iter().map(|&i| t[i]).collect();
    let x: Vec<Vec<Option<f64>>> = rescaled.kept.iter().map(|&i| x[i].clone()).collect();
    let n = y.len();
    report.rows_used = n;

    // Column-major covariates after imputation, plus indicator columns.
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut indicators: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, name) in covariates.iter().enumerate() {
        let mut observed: Vec<f64> = x.iter().filter_map(|r| r[k]).collect();
        let missing = n - observed.len();
        if observed.is_empty() {
            return Err(CliError::Data(format!("covariate `{name}` has no observed values")));
        }
        let fill = if missing > 0 { median(&mut observed) } else { 0.0 };
        columns.push((name.clone(), x.iter().map(|r| r[k].unwrap_or(fill)).collect()));
        if missing > 0 {
            report.imputed.push((name.clone(), missing, fill));
            let ind = format!("{name}_missing");
            indicators.push((ind.clone(), x.iter().map(|r| f64::from(r[k].is_none() as u8)).collect()));
            report.indicator_columns.push(ind);
        }
    }
    columns.extend(indicators);

    if let Some(name) = &spec.conditional_on {
        let col = &mut columns[0].1;
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Err(CliError::Data(format!("conditioning covariate `{name}` is constant")));
        }
        col.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
        report.conditioning_scale = Some((name.clone(), lo, hi));
    } else if spec.standardize {
        for (name, col) in &mut columns {
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let scale = if sd > 0.0 { sd } else { 1.0 };
            col.iter_mut().for_each(|v| *v = (*v - mean) / scale);
            report.standardized.push((name.clone(), mean, sd));
        }
    }
    report.covariate_columns = columns.iter().map(|(name, _)| name.clone()).collect();

    let d_x = columns.len();
    let mut flat = Vec::with_capacity(n * d_x);
    for i in 0..n {
        flat.extend(columns.iter().map(|(_, c)| c[i]));
    }
    let data = Dataset::new(y, rescaled.values, flat, d_x)?;
    Ok(Ingested { data, raw_t, range, report })
}

/// Writes a dataset as `y,t,x1,..,xd` with a header row.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    let header: Vec<String> = ["y".to_string(), "t".to_string()]
        .into_iter()
        .chain((1..=data.d_x()).map(|k| format!("x{k}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for i in 0..data.n() {
        let mut fields = vec![format!("{:?}", data.y()[i]), format!("{:?}", data.t()[i])];
        fields.extend(data.x_row(i).iter().map(|v| format!("{v:?}")));
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}
