//! Monotonicity of `mu(t, x) = E[Y(t) | X = x]` in `t` for every `x`, with a
//! scalar covariate on `[0, 1]`.
//!
//! Indices add a covariate cell `[x, x + 1/q]` to the two treatment cells, and
//! every moment and influence component is restricted to that cell.

use serde::{Deserialize, Serialize};

use crate::config::{Estimator, TestConfig};
use crate::data::Dataset;
use crate::error::{Error, Result, Stage, StageExt};
use crate::index::{cell, q_mass};
use crate::moments::{nu_hat_cell, Cell, CellPair};
use crate::test::{finish, fit_gps, oriented, Prepared, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EllX {
    pub q: u32,
    pub k1: u32,
    pub k2: u32,
    /// `x = kx / q`.
    pub kx: u32,
}

impl EllX {
    pub fn t1(&self) -> f64 {
        self.k1 as f64 / self.q as f64
    }

    pub fn t2(&self) -> f64 {
        self.k2 as f64 / self.q as f64
    }

    pub fn x(&self) -> f64 {
        self.kx as f64 / self.q as f64
    }

    pub fn inv_q(&self) -> f64 {
        1.0 / self.q as f64
    }

    pub fn pair(&self) -> CellPair {
        let x = Some(cell(self.kx, self.q));
        CellPair {
            lower: Cell { t: cell(self.k2, self.q), x },
            upper: Cell { t: cell(self.k1, self.q), x },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllXSet {
    pub q_max: u32,
    pub ells: Vec<EllX>,
    pub weights: Vec<f64>,
}

/// Enumerates `(q, t2, t1, x)` with `q^2 (q - 1) / 2` members per `q`.
pub fn build_ellx_set(q_max: u32) -> Result<EllXSet> {
    if q_max < 2 {
        return Err(Error::Config(format!("q_max must be at least 2, got {q_max}")));
    }
    let mass = q_mass(q_max);
    let mut ells = Vec::new();
    let mut weights = Vec::new();
    for q in 2..=q_max {
        let w = mass(q) / (q * q * (q - 1) / 2) as f64;
        for k2 in 0..q {
            for k1 in (k2 + 1)..q {
                for kx in 0..q {
                    ells.push(EllX { q, k1, k2, kx });
                    weights.push(w);
                }
            }
        }
    }
    Ok(EllXSet { q_max, ells, weights })
}

/// Covariate cells used by the conditional test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum XPartition {
    /// `[x, x + 1/q]` for `q x in {0, .., q-1}`.
    #[default]
    Dyadic,
    /// A single cell `[0, 1]`; reproduces the unconditional test.
    Whole,
}

fn pairs_and_weights(q_max: u32, partition: XPartition) -> Result<(Vec<CellPair>, Vec<f64>, CellPair)> {
    match partition {
        XPartition::Dyadic => {
            let set = build_ellx_set(q_max)?;
            let reference = CellPair {
                lower: Cell { t: (0.5, 1.0), x: Some((0.0, 0.5)) },
                upper: Cell { t: (0.0, 0.5), x: Some((0.0, 0.5)) },
            };
            Ok((set.ells.iter().map(EllX::pair).collect(), set.weights, reference))
        }
        XPartition::Whole => {
            let set = crate::index::build_ell_set(q_max)?;
            let whole = |p: CellPair| CellPair {
                lower: Cell { x: Some((0.0, 1.0)), ..p.lower },
                upper: Cell { x: Some((0.0, 1.0)), ..p.upper },
            };
            let pairs = set.ells.iter().map(|e| whole(CellPair::from(e))).collect();
            Ok((pairs, set.weights, whole(crate::moments::reference_pair())))
        }
    }
}

fn require_scalar(data: &Dataset) -> Result<()> {
    if data.d_x() != 1 {
        return Err(Error::Config(format!(
            "the conditional test needs exactly one covariate, got {}",
            data.d_x()
        )));
    }
    Ok(())
}

/// `nu_2(l_x) - nu_1(l_x)` with joint treatment/covariate indicators.
pub fn nu_hat_x(data: &Dataset, p_tilde: &[f64], ellx: &EllX) -> Result<f64> {
    require_scalar(data)?;
    let pair = ellx.pair();
    Ok(nu_hat_cell(data, p_tilde, &pair.lower) - nu_hat_cell(data, p_tilde, &pair.upper))
}

/// Largest `q` whose `q x q` joint cells in `(T, X)` each hold at least
/// `min_count` observations; 2 when none qualifies.
pub fn select_q_max_joint(data: &Dataset, min_count: usize) -> Result<u32> {
    require_scalar(data)?;
    let n = data.n();
    if min_count == 0 || n < 2 * min_count {
        return Err(Error::Config(format!(
            "sample of {n} is too small for min_cube_count={min_count}"
        )));
    }
    let upper = ((n / min_count) as f64).sqrt().floor() as u32;
    let (t, x) = (data.t(), data.x());
    let best = (2..=upper)
        .filter(|&q| {
            (0..q).all(|a| {
                let (tl, th) = cell(a, q);
                (0..q).all(|b| {
                    let (xl, xh) = cell(b, q);
                    t.iter()
                        .zip(x)
                        .filter(|(tv, xv)| **tv >= tl && **tv <= th && **xv >= xl && **xv <= xh)
                        .count()
                        >= min_count
                })
            })
        })
        .max();
    Ok(best.unwrap_or(2))
}

/// Nonparametric conditional-on-`X` monotonicity test.
pub fn run_conditional_test(data: &Dataset, cfg: &TestConfig) -> Result<TestResult> {
    run_conditional_test_with(data, cfg, XPartition::Dyadic)
}

pub fn run_conditional_test_with(data: &Dataset, cfg: &TestConfig, partition: XPartition) -> Result<TestResult> {
    cfg.validate().stage(Stage::Configuration)?;
    require_scalar(data).stage(Stage::Configuration)?;
    let data = oriented(data, cfg.direction);
    let q_max = match (cfg.q_max, partition) {
        (Some(q), _) => q,
        (None, XPartition::Dyadic) => select_q_max_joint(&data, cfg.min_cube_count).stage(Stage::IndexSelection)?,
        (None, XPartition::Whole) => {
            crate::index::select_q_max(data.t(), cfg.min_cube_count).stage(Stage::IndexSelection)?
        }
    };
    let (pairs, weights, reference) = pairs_and_weights(q_max, partition).stage(Stage::IndexSelection)?;
    let (fit, h) = fit_gps(&data, cfg, Estimator::Nonparametric, None).stage(Stage::PropensityFit)?;
    let prep = Prepared {
        data: &data,
        pairs,
        weights,
        reference,
        q_max,
    };
    finish(prep, &fit, h, cfg)
}
