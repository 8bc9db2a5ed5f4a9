//! Generalized propensity score estimation and the auxiliary kernel
//! regressions used by the nonparametric influence function.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ParametricFamily;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{product_kernel_unchecked, Kernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonparGps {
    /// Trimmed estimates `max(p_hat, trim)`.
    pub p_hat: Vec<f64>,
    /// Estimates before trimming.
    pub p_raw: Vec<f64>,
    pub h: f64,
    pub trimmed: Vec<bool>,
    pub trimmed_fraction: f64,
}

/// Leave-one-out kernel sums at one observation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LooSums {
    /// `sum_{j != i} K_h(X_j - X_i)`.
    pub kx: f64,
    /// `sum_{j != i} K_h(T_j - T_i) K_h(X_j - X_i)`.
    pub ktx: f64,
    /// `sum_{j != i} Y_j K_h(T_j - T_i) K_h(X_j - X_i)`.
    pub y_ktx: f64,
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

#[inline]
fn kx_weight(data: &Dataset, i: usize, j: usize, h: f64, kernel: Kernel) -> f64 {
    let (xi, xj) = (data.x_row(i), data.x_row(j));
    product_kernel_unchecked(xi.iter().zip(xj).map(|(a, b)| b - a), h, kernel)
}

pub(crate) fn loo_sums(data: &Dataset, h: f64, kernel: Kernel) -> Vec<LooSums> {
    let n = data.n();
    let (t, y) = (data.t(), data.y());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = LooSums::default();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let kx = kx_weight(data, i, j, h, kernel);
                if kx == 0.0 {
                    continue;
                }
                s.kx += kx;
                let kt = product_kernel_unchecked(std::iter::once(t[j] - t[i]), h, kernel);
                let ktx = kt * kx;
                s.ktx += ktx;
                s.y_ktx += y[j] * ktx;
            }
            s
        })
        .collect()
}

pub(crate) fn nonpar_gps_from_sums(sums: &[LooSums], h: f64, trim: Option<f64>) -> Result<NonparGps> {
    let n = sums.len();
    let mut p_raw = Vec::with_capacity(n);
    let mut p_hat = Vec::with_capacity(n);
    let mut trimmed = Vec::with_capacity(n);
    for (i, s) in sums.iter().enumerate() {
        let raw = if s.kx == 0.0 {
            match trim {
                Some(_) if s.ktx == 0.0 => 0.0,
                _ => return Err(Error::IsolatedPoint { index: i }),
            }
        } else {
            s.ktx / s.kx
        };
        let (p, cut) = match trim {
            Some(floor) if raw < floor || s.kx == 0.0 => (floor, true),
            _ => (raw, false),
        };
        p_raw.push(raw);
        p_hat.push(p);
        trimmed.push(cut);
    }
    if trim.is_none() {
        // Higher-order kernels can go negative; without an explicit floor,
        // nonpositive estimates take the smallest positive one.
        let floor = p_raw.iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return Err(Error::Estimation("no positive propensity estimate".into()));
        }
        for (p, cut) in p_hat.iter_mut().zip(trimmed.iter_mut()) {
            if *p <= 0.0 {
                *p = floor;
                *cut = true;
            }
        }
    }
    let trimmed_fraction = trimmed.iter().filter(|&&c| c).count() as f64 / n as f64;
    Ok(NonparGps {
        p_hat,
        p_raw,
        h,
        trimmed,
        trimmed_fraction,
    })
}

/// Leave-one-out conditional kernel density of `T` given `X` at each
/// observation, floored at `trim` when given.
pub fn fit_nonpar_gps(data: &Dataset, h: f64, kernel: Kernel, trim: Option<f64>) -> Result<NonparGps> {
    check_bandwidth(h)?;
    nonpar_gps_from_sums(&loo_sums(data, h, kernel), h, trim)
}

/// Kernel regression values plus rows that fell back to a global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoothed {
    pub values: Vec<f64>,
    pub fallback: Vec<bool>,
}

impl Smoothed {
    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

pub(crate) fn conditional_mean_from_sums(data: &Dataset, sums: &[LooSums]) -> Smoothed {
    let n = data.n();
    let total: f64 = data.y().iter().sum();
    let mut values = Vec::with_capacity(n);
    let mut fallback = Vec::with_capacity(n);
    for (i, s) in sums.iter().enumerate() {
        if s.ktx == 0.0 {
            values.push((total - data.y()[i]) / (n - 1) as f64);
            fallback.push(true);
        } else {
            values.push(s.y_ktx / s.ktx);
            fallback.push(false);
        }
    }
    Smoothed { values, fallback }
}

/// Leave-one-out Nadaraya-Watson estimate of `E[Y | T_i, X_i]`.
pub fn conditional_mean_y(data: &Dataset, h: f64, kernel: Kernel) -> Result<Smoothed> {
    check_bandwidth(h)?;
    Ok(conditional_mean_from_sums(data, &loo_sums(data, h, kernel)))
}

/// Leave-one-out regression on `X` of `Y 1(T in interval) / p` for one interval.
pub fn rho_hat(
    data: &Dataset,
    p_tilde: &[f64],
    interval: (f64, f64),
    h: f64,
    kernel: Kernel,
) -> Result<Smoothed> {
    Ok(rho_hat_many(data, p_tilde, &[interval], h, kernel)?.remove(0))
}

/// [`rho_hat`] for several intervals, sharing the covariate kernel rows.
pub fn rho_hat_many(
    data: &Dataset,
    p_tilde: &[f64],
    intervals: &[(f64, f64)],
    h: f64,
    kernel: Kernel,
) -> Result<Vec<Smoothed>> {
    check_bandwidth(h)?;
    let n = data.n();
    if p_tilde.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p_tilde.len() });
    }
    let (t, y) = (data.t(), data.y());
    // Sparse composites: for each interval the (row, Y/p) pairs with T inside.
    let composites: Vec<Vec<(usize, f64)>> = intervals
        .iter()
        .map(|&(lo, hi)| {
            (0..n)
                .filter(|&l| t[l] >= lo && t[l] <= hi)
                .map(|l| (l, y[l] / p_tilde[l]))
                .collect()
        })
        .collect();
    let totals: Vec<f64> = composites.iter().map(|c| c.iter().map(|(_, w)| w).sum()).collect();

    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut kx = vec![0.0; n];
            let mut denom = 0.0;
            for (j, k) in kx.iter_mut().enumerate() {
                if j != i {
                    *k = kx_weight(data, i, j, h, kernel);
                    denom += *k;
                }
            }
            let nums = composites
                .iter()
                .map(|c| c.iter().map(|&(l, w)| w * kx[l]).sum())
                .collect();
            (denom, nums)
        })
        .collect();

    let mut out: Vec<Smoothed> = intervals
        .iter()
        .map(|_| Smoothed {
            values: Vec::with_capacity(n),
            fallback: Vec::with_capacity(n),
        })
        .collect();
    for (i, (denom, nums)) in rows.into_iter().enumerate() {
        for (m, num) in nums.into_iter().enumerate() {
            let s = &mut out[m];
            if denom == 0.0 {
                let own = composites[m]
                    .iter()
                    .find(|(l, _)| *l == i)
                    .map_or(0.0, |(_, w)| *w);
                s.values.push((totals[m] - own) / (n - 1) as f64);
                s.fallback.push(true);
            } else {
                s.values.push(num / denom);
                s.fallback.push(false);
            }
        }
    }
    Ok(out)
}

impl ParametricFamily {
    #[inline]
    fn transform(&self, t: f64) -> f64 {
        match self {
            ParametricFamily::LogNormal => t.ln(),
            ParametricFamily::Normal => t,
        }
    }

    /// `g'(t)`, the Jacobian of the transform.
    #[inline]
    fn transform_slope(&self, t: f64) -> f64 {
        match self {
            ParametricFamily::LogNormal => 1.0 / t,
            ParametricFamily::Normal => 1.0,
        }
    }

    /// Conditional density `p(t, x; gamma)`, `gamma = (beta, ln sigma)`, where
    /// `beta` multiplies `(1, x)`.
    pub fn density(&self, t: f64, x: &[f64], gamma: &[f64]) -> f64 {
        let (z, sigma) = self.standardize(t, x, gamma);
        std_normal_pdf(z) / sigma * self.transform_slope(t)
    }

    /// Gradient of [`density`](Self::density) in `gamma`.
    pub fn density_gradient(&self, t: f64, x: &[f64], gamma: &[f64]) -> Vec<f64> {
        let p = self.density(t, x, gamma);
        self.score(t, x, gamma).into_iter().map(|s| p * s).collect()
    }

    /// Score `d/dgamma log p(t, x; gamma)`.
    pub fn score(&self, t: f64, x: &[f64], gamma: &[f64]) -> Vec<f64> {
        let (z, sigma) = self.standardize(t, x, gamma);
        let mut s = Vec::with_capacity(gamma.len());
        s.push(z / sigma);
        s.extend(x.iter().map(|xk| z * xk / sigma));
        s.push(z * z - 1.0);
        s
    }

    fn standardize(&self, t: f64, x: &[f64], gamma: &[f64]) -> (f64, f64) {
        let k = x.len() + 1;
        debug_assert_eq!(gamma.len(), k + 1);
        let mean = gamma[0] + x.iter().zip(&gamma[1..k]).map(|(a, b)| a * b).sum::<f64>();
        let sigma = gamma[k].exp();
        ((self.transform(t) - mean) / sigma, sigma)
    }
}

#[inline]
fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricGps {
    pub family: ParametricFamily,
    /// `(beta_0, beta_1.., ln sigma)`.
    pub gamma_hat: Vec<f64>,
    /// Density on the testing scale, floored at `trim` when given.
    pub p_hat: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub trimmed: Vec<bool>,
    pub trimmed_fraction: f64,
    /// `n x k` per-observation scores.
    pub score: DMatrix<f64>,
    /// Inverse of the mean outer product of scores.
    pub info_inv: DMatrix<f64>,
    /// `n x k` rows `info_inv * s_i`.
    pub influence_gamma: DMatrix<f64>,
    /// Factor converting densities in original treatment units to the
    /// testing scale (the width of the treatment range).
    pub jacobian: f64,
}

impl ParametricGps {
    pub fn dim(&self) -> usize {
        self.gamma_hat.len()
    }

    /// Gradient of the (trimmed) testing-scale density at observation `i`.
    pub fn p_gradient(&self, i: usize) -> Vec<f64> {
        if self.trimmed[i] {
            return vec![0.0; self.dim()];
        }
        self.score.row(i).iter().map(|s| s * self.p_raw[i]).collect()
    }
}

/// Maximum-likelihood fit of `g(T) | X ~ Normal((1, X)'beta, sigma^2)`.
///
/// `t_raw` is in original units; `jacobian` rescales densities to the
/// testing scale (1 when the two coincide).
pub fn fit_parametric_gps(
    family: ParametricFamily,
    t_raw: &[f64],
    data: &Dataset,
    jacobian: f64,
    trim: Option<f64>,
) -> Result<ParametricGps> {
    let n = data.n();
    if t_raw.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: t_raw.len() });
    }
    if family == ParametricFamily::LogNormal {
        if let Some(i) = t_raw.iter().position(|&t| !(t > 0.0)) {
            return Err(Error::Data(format!(
                "log-normal propensity needs positive treatment; row {i} has {}",
                t_raw[i]
            )));
        }
    }
    let d = data.d_x();
    let k = d + 1;
    if n <= k {
        return Err(Error::Estimation(format!("{n} observations cannot identify {k} coefficients")));
    }
    let design = DMatrix::from_fn(n, k, |i, c| if c == 0 { 1.0 } else { data.x_row(i)[c - 1] });
    let target = DVector::from_iterator(n, t_raw.iter().map(|&t| family.transform(t)));

    let gram = design.tr_mul(&design);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Estimation("design matrix is rank deficient".into()))?;
    // Reject near-singular designs that Cholesky still factors.
    let diag = chol.l_dirty().diagonal();
    let (dmin, dmax) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if dmin <= 1e-10 * dmax {
        return Err(Error::Estimation("design matrix is rank deficient".into()));
    }
    let beta = chol.solve(&design.tr_mul(&target));
    let resid = &target - &design * &beta;
    let sigma = (resid.norm_squared() / n as f64).sqrt();
    if !(sigma >= 1e-10) {
        return Err(Error::DegenerateFit(sigma));
    }
    let mut gamma_hat: Vec<f64> = beta.iter().copied().collect();
    gamma_hat.push(sigma.ln());

    let dim = k + 1;
    let mut score = DMatrix::zeros(n, dim);
    let mut p_raw = Vec::with_capacity(n);
    for i in 0..n {
        let x = data.x_row(i);
        for (c, s) in family.score(t_raw[i], x, &gamma_hat).into_iter().enumerate() {
            score[(i, c)] = s;
        }
        p_raw.push(family.density(t_raw[i], x, &gamma_hat) * jacobian);
    }
    let info = score.tr_mul(&score) / n as f64;
    let info_inv = info
        .cholesky()
        .ok_or_else(|| Error::Estimation("score outer-product matrix is not positive definite".into()))?
        .inverse();
    let influence_gamma = &score * &info_inv;

    let mut p_hat = Vec::with_capacity(n);
    let mut trimmed = Vec::with_capacity(n);
    for &p in &p_raw {
        match trim {
            Some(floor) if p < floor => {
                p_hat.push(floor);
                trimmed.push(true);
            }
            _ => {
                p_hat.push(p);
                trimmed.push(false);
            }
        }
    }
    let trimmed_fraction = trimmed.iter().filter(|&&c| c).count() as f64 / n as f64;
    Ok(ParametricGps {
        family,
        gamma_hat,
        p_hat,
        p_raw,
        trimmed,
        trimmed_fraction,
        score,
        info_inv,
        influence_gamma,
        jacobian,
    })
}

/// Log-normal fit on original-unit treatments; `jacobian` as in
/// [`fit_parametric_gps`].
pub fn fit_lognormal_gps(t_raw: &[f64], data: &Dataset, jacobian: f64, trim: Option<f64>) -> Result<ParametricGps> {
    fit_parametric_gps(ParametricFamily::LogNormal, t_raw, data, jacobian, trim)
}
