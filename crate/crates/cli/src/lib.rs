//! Command-line front end for the dose-response monotonicity test: CSV
//! ingestion, configuration, and reports.

pub mod args;
pub mod error;
pub mod ingest;
pub mod report;
pub mod spec;

pub use error::{CliError, Result};
pub use ingest::{ingest_csv, write_dataset_csv, IngestReport, Ingested};
pub use report::{render_json, render_text, run, RunReport};
pub use spec::{FileConfig, RunSpec};
