//! Run configuration and tuning-parameter rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelOrder;

/// Which monotonicity null is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `mu` is weakly increasing.
    Increasing,
    /// `mu` is weakly decreasing; tested by negating the outcome.
    Decreasing,
}

/// How the generalized propensity score is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Leave-one-out conditional kernel density.
    Nonparametric,
    /// Correctly specified parametric conditional density fitted by MLE.
    Parametric(ParametricFamily),
}

/// Parametric families for `T | X`: `g(T) | X ~ Normal(X'beta, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParametricFamily {
    /// `g(t) = log t`.
    LogNormal,
    /// `g(t) = t`.
    Normal,
}

/// Distribution of the bootstrap multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplier {
    #[default]
    Gaussian,
    Rademacher,
}

/// Functional applied to the recentered bootstrap process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapFunctional {
    /// Same squared positive-part sum as the test statistic.
    #[default]
    Squared,
    /// Positive parts summed without squaring (debugging only).
    Unsquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub n_boot: usize,
    pub epsilon_floor: f64,
    pub eta: f64,
    pub a_n_scale: f64,
    pub b_n_scale: f64,
    pub min_cube_count: usize,
    /// Forces the truncation `q_max` instead of selecting it from the data.
    pub q_max: Option<u32>,
    /// Lower bound applied to estimated propensities.
    pub trim: Option<f64>,
    pub bandwidth_scale: f64,
    pub kernel_order: KernelOrder,
    pub direction: Direction,
    pub multiplier: Multiplier,
    pub functional: BootstrapFunctional,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.1,
            n_boot: 1000,
            epsilon_floor: 1e-6,
            eta: 1e-6,
            a_n_scale: 0.15,
            b_n_scale: 0.85,
            min_cube_count: 25,
            q_max: None,
            trim: None,
            bandwidth_scale: 1.0,
            kernel_order: KernelOrder::Fourth,
            direction: Direction::Increasing,
            multiplier: Multiplier::Gaussian,
            functional: BootstrapFunctional::Squared,
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if self.n_boot == 0 {
            return bad("n_boot must be at least 1".into());
        }
        if !(self.epsilon_floor > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon_floor));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if 1.0 - self.alpha + self.eta >= 1.0 {
            return bad("1 - alpha + eta must stay below 1".into());
        }
        if let Some(tr) = self.trim {
            if !(tr > 0.0 && tr < 1.0) {
                return bad(format!("trim must lie in (0,1), got {tr}"));
            }
        }
        if let Some(q) = self.q_max {
            if q < 2 {
                return bad(format!("q_max must be at least 2, got {q}"));
            }
        }
        if !(self.bandwidth_scale > 0.0) {
            return bad(format!("bandwidth scale must be positive, got {}", self.bandwidth_scale));
        }
        if self.a_n_scale < 0.0 || self.b_n_scale < 0.0 {
            return bad("GMS scales must be non-negative".into());
        }
        if self.min_cube_count == 0 {
            return bad("min_cube_count must be positive".into());
        }
        Ok(())
    }
}

/// GMS thresholds `a_n = a_scale ln n` and `B_n = b_scale ln n / ln ln n`.
pub fn gms_tuning(n: usize, cfg: &TestConfig) -> Result<(f64, f64)> {
    if n < 8 {
        return Err(Error::Config(format!("GMS tuning needs n >= 8, got {n}")));
    }
    let ln = (n as f64).ln();
    Ok((cfg.a_n_scale * ln, cfg.b_n_scale * ln / ln.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gms_tuning_values() {
        let cfg = TestConfig::default();
        let (a, b) = gms_tuning(800, &cfg).unwrap();
        assert!((a - 1.0027).abs() < 1e-4, "{a}");
        assert!((b - 2.9908).abs() < 1e-4, "{b}");
        let (a, b) = gms_tuning(200, &cfg).unwrap();
        assert!((a - 0.7947).abs() < 1e-4, "{a}");
        assert!((b - 2.70097).abs() < 1e-4, "{b}");
        let zero = TestConfig { a_n_scale: 0.0, ..cfg.clone() };
        assert_eq!(gms_tuning(1234, &zero).unwrap().0, 0.0);
        assert!(gms_tuning(7, &cfg).is_err());
    }

    #[test]
    fn validation() {
        assert!(TestConfig::default().validate().is_ok());
        let bad = [
            TestConfig { alpha: 0.0, ..Default::default() },
            TestConfig { alpha: 1.0, ..Default::default() },
            TestConfig { n_boot: 0, ..Default::default() },
            TestConfig { epsilon_floor: 0.0, ..Default::default() },
            TestConfig { eta: -1.0, ..Default::default() },
            TestConfig { trim: Some(1.5), ..Default::default() },
            TestConfig { q_max: Some(1), ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
