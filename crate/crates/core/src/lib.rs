//! Testing whether the average dose-response function of a continuous
//! treatment is weakly monotone.
//!
//! The pipeline estimates the generalized propensity score (leave-one-out
//! kernel or parametric MLE), forms inverse-propensity-weighted moment
//! inequalities over dyadic treatment cells, aggregates their positive parts
//! into a Cramér-von Mises statistic, and compares it to a multiplier
//! bootstrap critical value with generalized moment selection.

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditional;
pub mod config;
pub mod data;
pub mod error;
pub mod gps;
pub mod index;
pub mod kernels;
pub mod moments;
pub mod sim;

pub use config::{Direction, Estimator, ParametricFamily, TestConfig};
pub use data::{Dataset, TreatmentRange};
pub use error::{Error, Result};
pub use index::{build_ell_set, Ell, EllSet};
pub use kernels::{Kernel, KernelOrder};
pub use test::{run_test, TestResult};
