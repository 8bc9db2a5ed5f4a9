//! Instrumental cube indices and their weights.
//!
//! An index `(t1, t2, 1/q)` compares the outcome mass over the cell
//! `[t2, t2 + 1/q]` with the mass over the cell `[t1, t1 + 1/q]`, `t1 > t2`.
//! Cell corners are stored as integers over a common denominator `q` so
//! enumeration is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ell {
    pub q: u32,
    /// `t1 = k1 / q`.
    pub k1: u32,
    /// `t2 = k2 / q`.
    pub k2: u32,
}

impl Ell {
    pub fn new(q: u32, k1: u32, k2: u32) -> Result<Self> {
        if q < 2 || k1 >= q || k2 >= q || k1 <= k2 {
            return Err(Error::Config(format!("invalid index (k1={k1}, k2={k2}, q={q})")));
        }
        Ok(Ell { q, k1, k2 })
    }

    pub fn t1(&self) -> f64 {
        self.k1 as f64 / self.q as f64
    }

    pub fn t2(&self) -> f64 {
        self.k2 as f64 / self.q as f64
    }

    pub fn inv_q(&self) -> f64 {
        1.0 / self.q as f64
    }

    /// The right-hand cell `[t1, t1 + 1/q]`.
    pub fn upper_cell(&self) -> (f64, f64) {
        cell(self.k1, self.q)
    }

    /// The left-hand cell `[t2, t2 + 1/q]`.
    pub fn lower_cell(&self) -> (f64, f64) {
        cell(self.k2, self.q)
    }
}

pub(crate) fn cell(k: u32, q: u32) -> (f64, f64) {
    (k as f64 / q as f64, (k + 1) as f64 / q as f64)
}

/// The truncated index set with its weighting distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllSet {
    pub q_max: u32,
    pub ells: Vec<Ell>,
    pub weights: Vec<f64>,
}

impl EllSet {
    pub fn len(&self) -> usize {
        self.ells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ells.is_empty()
    }
}

/// Per-`q` weight mass `q^-2 / sum_{r=2}^{q_max} r^-2`.
pub(crate) fn q_mass(q_max: u32) -> impl Fn(u32) -> f64 {
    let total: f64 = (2..=q_max).map(|r| 1.0 / (r as f64 * r as f64)).sum();
    move |q| 1.0 / (q as f64 * q as f64) / total
}

/// Enumerates all strict pairs for `q = 2..=q_max` in `(q, t2, t1)` order.
pub fn build_ell_set(q_max: u32) -> Result<EllSet> {
    if q_max < 2 {
        return Err(Error::Config(format!("q_max must be at least 2, got {q_max}")));
    }
    let mass = q_mass(q_max);
    let mut ells = Vec::new();
    let mut weights = Vec::new();
    for q in 2..=q_max {
        let members = (q * (q - 1) / 2) as f64;
        let w = mass(q) / members;
        for k2 in 0..q {
            for k1 in (k2 + 1)..q {
                ells.push(Ell { q, k1, k2 });
                weights.push(w);
            }
        }
    }
    Ok(EllSet { q_max, ells, weights })
}

/// Largest `q <= n / min_count` whose cells `[j/q, (j+1)/q]` each hold at least
/// `min_count` treatment values; 2 when none qualifies.
pub fn select_q_max(t: &[f64], min_cube_count: usize) -> Result<u32> {
    let n = t.len();
    if min_cube_count == 0 {
        return Err(Error::Config("min_cube_count must be positive".into()));
    }
    if n < 2 * min_cube_count {
        return Err(Error::Config(format!(
            "sample of {n} is too small for min_cube_count={min_cube_count}; use at most {}",
            n / 2
        )));
    }
    let upper = (n / min_cube_count) as u32;
    let best = (2..=upper)
        .filter(|&q| {
            (0..q).all(|j| {
                let (lo, hi) = cell(j, q);
                t.iter().filter(|&&v| v >= lo && v <= hi).count() >= min_cube_count
            })
        })
        .max();
    Ok(best.unwrap_or(2))
}
