//! Observed samples and treatment rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed triples `(Y, T, X)` with the treatment expressed on the testing
/// scale, where the range under test is `[0, 1]`.
///
/// Treatment values outside `[0, 1]` are allowed: they take part in the
/// propensity fit but never fall inside an instrumental cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    /// Row-major `n x d_x`.
    x: Vec<f64>,
    d_x: usize,
}

impl Dataset {
    pub fn new(y: Vec<f64>, t: Vec<f64>, x: Vec<f64>, d_x: usize) -> Result<Self> {
        let n = y.len();
        if t.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.len() });
        }
        if d_x == 0 {
            return Err(Error::Data("at least one covariate is required".into()));
        }
        if x.len() != n * d_x {
            return Err(Error::DimensionMismatch { expected: n * d_x, got: x.len() });
        }
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 observations, got {n}")));
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !finite(&y) || !finite(&t) || !finite(&x) {
            return Err(Error::Data("non-finite value in sample".into()));
        }
        Ok(Dataset { y, t, x, d_x })
    }

    /// Builds a dataset from one scalar covariate.
    pub fn with_scalar_covariate(y: Vec<f64>, t: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        Dataset::new(y, t, x, 1)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Flat row-major covariate matrix.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d_x..(i + 1) * self.d_x]
    }

    /// Copy of the sample with the outcome negated.
    pub fn negated(&self) -> Dataset {
        self.with_outcome(self.y.iter().map(|v| -v).collect())
    }

    /// Copy of the sample with the outcome scaled by `c`.
    pub fn scaled(&self, c: f64) -> Dataset {
        self.with_outcome(self.y.iter().map(|v| c * v).collect())
    }

    pub(crate) fn with_outcome(&self, y: Vec<f64>) -> Dataset {
        debug_assert_eq!(y.len(), self.y.len());
        Dataset {
            y,
            t: self.t.clone(),
            x: self.x.clone(),
            d_x: self.d_x,
        }
    }
}

/// The treatment range `[t_lower, t_upper]` under test, in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRange {
    pub t_lower: f64,
    pub t_upper: f64,
}

impl TreatmentRange {
    pub fn new(t_lower: f64, t_upper: f64) -> Result<Self> {
        if !t_lower.is_finite() || !t_upper.is_finite() || t_upper <= t_lower {
            return Err(Error::Config(format!(
                "degenerate treatment range [{t_lower}, {t_upper}]"
            )));
        }
        Ok(TreatmentRange { t_lower, t_upper })
    }

    pub fn width(&self) -> f64 {
        self.t_upper - self.t_lower
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_lower && t <= self.t_upper
    }
}

/// Affine map `phi(t) = (t - t_lower) / (t_upper - t_lower)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineMap {
    pub fn apply(&self, t: f64) -> f64 {
        (t - self.offset) / self.scale
    }

    pub fn invert(&self, u: f64) -> f64 {
        u * self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub values: Vec<f64>,
    /// Indices into the input of the retained rows.
    pub kept: Vec<usize>,
    pub dropped: usize,
    pub map: AffineMap,
}

/// Drops observations outside `range` and maps the rest onto `[0, 1]`.
pub fn rescale_treatment(t_raw: &[f64], range: TreatmentRange) -> Result<Rescaled> {
    let range = TreatmentRange::new(range.t_lower, range.t_upper)?;
    let map = AffineMap {
        offset: range.t_lower,
        scale: range.width(),
    };
    let mut values = Vec::with_capacity(t_raw.len());
    let mut kept = Vec::with_capacity(t_raw.len());
    for (i, &t) in t_raw.iter().enumerate() {
        if range.contains(t) {
            values.push(map.apply(t).clamp(0.0, 1.0));
            kept.push(i);
        }
    }
    let dropped = t_raw.len() - kept.len();
    Ok(Rescaled {
        values,
        kept,
        dropped,
        map,
    })
}
