//! Moment estimators, estimated influence functions, and floored scales.
//!
//! Each moment compares the inverse-propensity-weighted outcome mass of a
//! lower cell (`j = 2`) with that of an upper cell (`j = 1`):
//! `nu = nu_2 - nu_1`, which is non-positive for every index under the
//! increasing null.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gps::{rho_hat_many, NonparGps, ParametricGps, Smoothed};

/// A treatment interval, optionally intersected with a covariate interval
/// on the first covariate. Both are closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub t: (f64, f64),
    pub x: Option<(f64, f64)>,
}

impl Cell {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Cell { t: (lo, hi), x: None }
    }

    #[inline]
    pub fn t_contains(&self, t: f64) -> bool {
        t >= self.t.0 && t <= self.t.1
    }

    #[inline]
    pub fn x_contains(&self, x: f64) -> bool {
        self.x.is_none_or(|(lo, hi)| x >= lo && x <= hi)
    }

    #[inline]
    fn contains(&self, data: &Dataset, i: usize) -> bool {
        self.t_contains(data.t()[i]) && self.x_contains(data.x_row(i)[0])
    }

    fn key(&self) -> [u64; 4] {
        let (xl, xh) = self.x.unwrap_or((f64::NAN, f64::NAN));
        [self.t.0.to_bits(), self.t.1.to_bits(), xl.to_bits(), xh.to_bits()]
    }
}

/// One moment: `nu = mass(lower) - mass(upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPair {
    /// The `j = 2` cell.
    pub lower: Cell,
    /// The `j = 1` cell.
    pub upper: Cell,
}

impl From<&crate::index::Ell> for CellPair {
    fn from(e: &crate::index::Ell) -> Self {
        let (a, b) = e.lower_cell();
        let (c, d) = e.upper_cell();
        CellPair {
            lower: Cell::interval(a, b),
            upper: Cell::interval(c, d),
        }
    }
}

/// The scale reference `(t1, t2, 1/q) = (0, 1/2, 1/2)`.
pub fn reference_pair() -> CellPair {
    CellPair {
        lower: Cell::interval(0.5, 1.0),
        upper: Cell::interval(0.0, 0.5),
    }
}

/// `n^-1 sum_i Y_i / p_i 1(T_i in [lo, hi])`.
pub fn nu_hat(data: &Dataset, p_tilde: &[f64], interval: (f64, f64)) -> f64 {
    nu_hat_cell(data, p_tilde, &Cell::interval(interval.0, interval.1))
}

pub(crate) fn nu_hat_cell(data: &Dataset, p_tilde: &[f64], cell: &Cell) -> f64 {
    let y = data.y();
    let s: f64 = (0..data.n())
        .filter(|&i| cell.contains(data, i))
        .map(|i| y[i] / p_tilde[i])
        .sum();
    s / data.n() as f64
}

/// Per-observation `1_x (1_t / p (Y - E[Y|T,X]) + rho) - nu` for one cell.
fn component_np(data: &Dataset, p_tilde: &[f64], ey: &[f64], cell: &Cell, rho: &[f64], nu: f64) -> Vec<f64> {
    let (t, y) = (data.t(), data.y());
    (0..data.n())
        .map(|i| {
            if !cell.x_contains(data.x_row(i)[0]) {
                return -nu;
            }
            let ipw = if cell.t_contains(t[i]) {
                (y[i] - ey[i]) / p_tilde[i]
            } else {
                0.0
            };
            ipw + rho[i] - nu
        })
        .collect()
}

/// Estimated nonparametric influence values of one moment.
///
/// `rho2`/`nu2` belong to the lower cell, `rho1`/`nu1` to the upper cell.
#[allow(clippy::too_many_arguments)]
pub fn influence_np(
    data: &Dataset,
    gps: &NonparGps,
    ey: &[f64],
    pair: &CellPair,
    rho1: &[f64],
    rho2: &[f64],
    nu1: f64,
    nu2: f64,
) -> Vec<f64> {
    let c2 = component_np(data, &gps.p_hat, ey, &pair.lower, rho2, nu2);
    let c1 = component_np(data, &gps.p_hat, ey, &pair.upper, rho1, nu1);
    c2.iter().zip(&c1).map(|(a, b)| a - b).collect()
}

/// `G_hat = n^-1 sum_i Y_i 1_i grad p_i / p_i^2` for one cell.
pub fn g_hat(data: &Dataset, gps: &ParametricGps, interval: (f64, f64)) -> Vec<f64> {
    g_hat_cell(data, gps, &Cell::interval(interval.0, interval.1))
}

pub(crate) fn g_hat_cell(data: &Dataset, gps: &ParametricGps, cell: &Cell) -> Vec<f64> {
    let n = data.n();
    let mut g = vec![0.0; gps.dim()];
    for i in (0..n).filter(|&i| cell.contains(data, i)) {
        let w = data.y()[i] / (gps.p_hat[i] * gps.p_hat[i]);
        if w == 0.0 {
            continue;
        }
        for (gc, dc) in g.iter_mut().zip(gps.p_gradient(i)) {
            *gc += w * dc;
        }
    }
    g.iter_mut().for_each(|v| *v /= n as f64);
    g
}

fn component_pa(data: &Dataset, gps: &ParametricGps, cell: &Cell, g: &[f64], nu: f64) -> Result<Vec<f64>> {
    if g.len() != gps.influence_gamma.ncols() {
        return Err(Error::DimensionMismatch {
            expected: gps.influence_gamma.ncols(),
            got: g.len(),
        });
    }
    let y = data.y();
    Ok((0..data.n())
        .map(|i| {
            let lead = if cell.contains(data, i) { y[i] / gps.p_hat[i] } else { 0.0 };
            let corr: f64 = gps.influence_gamma.row(i).iter().zip(g).map(|(a, b)| a * b).sum();
            lead - corr - nu
        })
        .collect())
}

/// Estimated parametric influence values of one moment.
///
/// `g2`/`nu2` belong to the lower cell, `g1`/`nu1` to the upper cell.
#[allow(clippy::too_many_arguments)]
pub fn influence_pa(
    data: &Dataset,
    gps: &ParametricGps,
    pair: &CellPair,
    g1: &[f64],
    g2: &[f64],
    nu1: f64,
    nu2: f64,
) -> Result<Vec<f64>> {
    let c2 = component_pa(data, gps, &pair.lower, g2, nu2)?;
    let c1 = component_pa(data, gps, &pair.upper, g1, nu1)?;
    Ok(c2.iter().zip(&c1).map(|(a, b)| a - b).collect())
}

/// A fitted propensity model plus the plug-ins its influence function needs.
#[derive(Debug, Clone)]
pub enum GpsFit {
    Nonparametric {
        gps: NonparGps,
        /// Leave-one-out `E[Y | T, X]`.
        ey: Smoothed,
        h: f64,
        kernel: crate::kernels::Kernel,
    },
    Parametric(ParametricGps),
}

impl GpsFit {
    pub fn p_tilde(&self) -> &[f64] {
        match self {
            GpsFit::Nonparametric { gps, .. } => &gps.p_hat,
            GpsFit::Parametric(g) => &g.p_hat,
        }
    }

    pub fn trimmed_fraction(&self) -> f64 {
        match self {
            GpsFit::Nonparametric { gps, .. } => gps.trimmed_fraction,
            GpsFit::Parametric(g) => g.trimmed_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub nu_hat: Vec<f64>,
    pub nu1_hat: Vec<f64>,
    pub nu2_hat: Vec<f64>,
    /// `n x L` estimated influence values.
    pub phi_hat: DMatrix<f64>,
    pub sigma_hat: Vec<f64>,
    pub sigma_eps: Vec<f64>,
    pub ref_sigma: f64,
    /// The reference scale was zero and every floored scale was set to 1.
    pub degenerate_scale: bool,
    /// Rows where an auxiliary kernel regression fell back to a global mean.
    pub fallback_rows: usize,
}

impl MomentEstimates {
    pub fn len(&self) -> usize {
        self.nu_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu_hat.is_empty()
    }

    /// `sqrt(n) nu / sigma_eps` per index.
    pub fn studentized(&self) -> Vec<f64> {
        let rn = (self.phi_hat.nrows() as f64).sqrt();
        self.nu_hat.iter().zip(&self.sigma_eps).map(|(v, s)| rn * v / s).collect()
    }
}

/// `max(sigma, eps * ref_sigma)`, or 1 everywhere when `ref_sigma` is 0.
pub fn floor_scales(sigma: &[f64], ref_sigma: f64, epsilon: f64) -> (Vec<f64>, bool) {
    if ref_sigma == 0.0 {
        return (vec![1.0; sigma.len()], true);
    }
    (sigma.iter().map(|&s| s.max(epsilon * ref_sigma)).collect(), false)
}

fn root_mean_square(v: &[f64]) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

/// Computes every moment, its influence values, and floored scales.
pub fn assemble_moments(
    data: &Dataset,
    pairs: &[CellPair],
    reference: &CellPair,
    fit: &GpsFit,
    epsilon: f64,
) -> Result<MomentEstimates> {
    let n = data.n();
    let p_tilde = fit.p_tilde();
    if p_tilde.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p_tilde.len() });
    }

    // Each distinct cell contributes one moment and one influence component.
    let mut cells: Vec<Cell> = Vec::new();
    let mut slot: HashMap<[u64; 4], usize> = HashMap::new();
    let mut intern = |c: &Cell| {
        *slot.entry(c.key()).or_insert_with(|| {
            cells.push(*c);
            cells.len() - 1
        })
    };
    let pair_slots: Vec<(usize, usize)> = pairs
        .iter()
        .chain(std::iter::once(reference))
        .map(|p| (intern(&p.lower), intern(&p.upper)))
        .collect();

    let nus: Vec<f64> = cells.iter().map(|c| nu_hat_cell(data, p_tilde, c)).collect();
    let mut fallback_rows = vec![false; n];
    let components: Vec<Vec<f64>> = match fit {
        GpsFit::Nonparametric { gps, ey, h, kernel } => {
            let mut t_slot: HashMap<[u64; 2], usize> = HashMap::new();
            let mut intervals = Vec::new();
            let t_index: Vec<usize> = cells
                .iter()
                .map(|c| {
                    *t_slot.entry([c.t.0.to_bits(), c.t.1.to_bits()]).or_insert_with(|| {
                        intervals.push(c.t);
                        intervals.len() - 1
                    })
                })
                .collect();
            let rhos = rho_hat_many(data, &gps.p_hat, &intervals, *h, *kernel)?;
            for (i, f) in fallback_rows.iter_mut().enumerate() {
                *f = ey.fallback[i] || rhos.iter().any(|r| r.fallback[i]);
            }
            cells
                .iter()
                .zip(&t_index)
                .zip(&nus)
                .map(|((c, &ti), &nu)| component_np(data, &gps.p_hat, &ey.values, c, &rhos[ti].values, nu))
                .collect()
        }
        GpsFit::Parametric(gps) => cells
            .iter()
            .zip(&nus)
            .map(|(c, &nu)| component_pa(data, gps, c, &g_hat_cell(data, gps, c), nu))
            .collect::<Result<_>>()?,
    };

    let diff = |(lo, up): (usize, usize)| -> Vec<f64> {
        components[lo].iter().zip(&components[up]).map(|(a, b)| a - b).collect()
    };
    let (ref_slots, moment_slots) = pair_slots.split_last().expect("reference pair present");
    let ref_sigma = root_mean_square(&diff(*ref_slots));

    let l = pairs.len();
    let mut phi_hat = DMatrix::zeros(n, l);
    let mut sigma_hat = Vec::with_capacity(l);
    let mut nu1_hat = Vec::with_capacity(l);
    let mut nu2_hat = Vec::with_capacity(l);
    for (k, &(lo, up)) in moment_slots.iter().enumerate() {
        let col = diff((lo, up));
        sigma_hat.push(root_mean_square(&col));
        phi_hat.column_mut(k).copy_from_slice(&col);
        nu2_hat.push(nus[lo]);
        nu1_hat.push(nus[up]);
    }
    let nu_hat = nu2_hat.iter().zip(&nu1_hat).map(|(a, b)| a - b).collect();
    let (sigma_eps, degenerate_scale) = floor_scales(&sigma_hat, ref_sigma, epsilon);
    Ok(MomentEstimates {
        nu_hat,
        nu1_hat,
        nu2_hat,
        phi_hat,
        sigma_hat,
        sigma_eps,
        ref_sigma,
        degenerate_scale,
        fallback_rows: fallback_rows.iter().filter(|&&f| f).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ParametricFamily;
    use crate::gps::{fit_parametric_gps, NonparGps};
    use crate::index::build_ell_set;

    fn six_points() -> (Dataset, Vec<f64>) {
        let y = vec![1.0, -2.0, 0.5, 3.0, 1.5, -0.7];
        let t = vec![0.05, 0.3, 0.34, 0.5, 0.8, 1.0];
        let x = vec![0.2, 0.9, 0.4, 0.1, 0.6, 0.3];
        let p = vec![0.5, 1.2, 0.8, 2.0, 0.9, 1.1];
        (Dataset::new(y, t, x, 1).unwrap(), p)
    }

    #[test]
    fn nu_hat_trivial_cases() {
        let (d, p) = six_points();
        let zero = d.with_outcome(vec![0.0; 6]);
        assert_eq!(nu_hat(&zero, &p, (0.0, 0.5)), 0.0);
        let mean = d.y().iter().sum::<f64>() / 6.0;
        assert!((nu_hat(&d, &[1.0; 6], (0.0, 1.0)) - mean).abs() < 1e-15);
        assert_eq!(nu_hat(&d, &p, (0.9, 0.95)), 0.0);
    }

    #[test]
    fn nu_hat_matches_direct_arithmetic() {
        let (d, p) = six_points();
        let s = build_ell_set(3).unwrap();
        // Hand-evaluated cell masses with closed cells.
        let mass = |lo: f64, hi: f64| -> f64 {
            let mut acc = 0.0;
            if 0.05 >= lo && 0.05 <= hi { acc += 1.0 / 0.5; }
            if 0.3 >= lo && 0.3 <= hi { acc += -2.0 / 1.2; }
            if 0.34 >= lo && 0.34 <= hi { acc += 0.5 / 0.8; }
            if 0.5 >= lo && 0.5 <= hi { acc += 3.0 / 2.0; }
            if 0.8 >= lo && 0.8 <= hi { acc += 1.5 / 0.9; }
            if 1.0 >= lo && 1.0 <= hi { acc += -0.7 / 1.1; }
            acc / 6.0
        };
        for e in &s.ells {
            let (a, b) = e.lower_cell();
            let (c, dd) = e.upper_cell();
            let direct = mass(a, b) - mass(c, dd);
            let via = nu_hat(&d, &p, (a, b)) - nu_hat(&d, &p, (c, dd));
            assert!((direct - via).abs() < 1e-15, "{e:?}");
        }
    }

    fn fake_np(d: &Dataset, p: Vec<f64>) -> GpsFit {
        let n = d.n();
        GpsFit::Nonparametric {
            gps: NonparGps {
                p_raw: p.clone(),
                p_hat: p,
                h: 10.0,
                trimmed: vec![false; n],
                trimmed_fraction: 0.0,
            },
            ey: Smoothed { values: d.y().to_vec(), fallback: vec![false; n] },
            h: 10.0,
            kernel: crate::kernels::Kernel::new(crate::kernels::KernelOrder::Second),
        }
    }

    #[test]
    fn residual_term_vanishes_for_exact_regression() {
        // With E[Y|T,X] = Y the residual part is zero and only rho - nu remains.
        let (d, p) = six_points();
        let fit = fake_np(&d, p.clone());
        let GpsFit::Nonparametric { gps, ey, h, kernel } = &fit else { unreachable!() };
        let pair = CellPair::from(&build_ell_set(2).unwrap().ells[0]);
        let rhos = rho_hat_many(&d, &p, &[pair.upper.t, pair.lower.t], *h, *kernel).unwrap();
        let nu1 = nu_hat(&d, &p, pair.upper.t);
        let nu2 = nu_hat(&d, &p, pair.lower.t);
        let phi = influence_np(&d, gps, &ey.values, &pair, &rhos[0].values, &rhos[1].values, nu1, nu2);
        for (i, v) in phi.iter().enumerate() {
            let expect = (rhos[1].values[i] - nu2) - (rhos[0].values[i] - nu1);
            assert!((v - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn full_sample_rho_centers_influence_exactly() {
        // Symbolic identity: with rho equal to the full-sample composite mean,
        // nu equal to its plug-in, and a residual-free regression, the
        // influence values average to zero.
        let (d, p) = six_points();
        let fit = fake_np(&d, p.clone());
        let GpsFit::Nonparametric { gps, ey, .. } = &fit else { unreachable!() };
        for e in &build_ell_set(3).unwrap().ells {
            let pair = CellPair::from(e);
            let nu1 = nu_hat(&d, &p, pair.upper.t);
            let nu2 = nu_hat(&d, &p, pair.lower.t);
            let phi = influence_np(&d, gps, &ey.values, &pair, &[nu1; 6], &[nu2; 6], nu1, nu2);
            assert!(phi.iter().sum::<f64>().abs() / 6.0 < 1e-12);
        }
    }

    #[test]
    fn floor_examples() {
        let (s, deg) = floor_scales(&[0.001], 2.0, 1e-6);
        assert_eq!(s, vec![0.001]);
        assert!(!deg);
        let (s, _) = floor_scales(&[1e-9], 2.0, 1e-6);
        assert_eq!(s, vec![2e-6]);
        let (s, deg) = floor_scales(&[0.0, 0.3], 0.0, 1e-6);
        assert_eq!(s, vec![1.0, 1.0]);
        assert!(deg);
    }

    #[test]
    fn zero_outcome_is_degenerate() {
        let (d, p) = six_points();
        let zero = d.with_outcome(vec![0.0; 6]);
        let fit = fake_np(&zero, p);
        let pairs: Vec<CellPair> = build_ell_set(3).unwrap().ells.iter().map(CellPair::from).collect();
        let m = assemble_moments(&zero, &pairs, &reference_pair(), &fit, 1e-6).unwrap();
        assert!(m.nu_hat.iter().all(|&v| v == 0.0));
        assert!(m.sigma_hat.iter().all(|&v| v == 0.0));
        assert!(m.degenerate_scale);
        assert!(m.sigma_eps.iter().all(|&v| v == 1.0));
    }

    fn parametric_fixture() -> (Dataset, ParametricGps) {
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let t: Vec<f64> = x.iter().enumerate().map(|(i, xi)| 0.2 + 0.5 * xi + 0.3 * ((i as f64) * 1.3).cos()).collect();
        let y: Vec<f64> = t.iter().zip(&x).map(|(ti, xi)| ti * ti + xi + 0.1).collect();
        let d = Dataset::new(y, t.clone(), x, 1).unwrap();
        let g = fit_parametric_gps(ParametricFamily::Normal, &t, &d, 1.0, None).unwrap();
        (d, g)
    }

    #[test]
    fn g_hat_trivial_cases() {
        let (d, g) = parametric_fixture();
        let zero = d.with_outcome(vec![0.0; d.n()]);
        assert!(g_hat(&zero, &g, (0.0, 1.0)).iter().all(|&v| v == 0.0));
        assert!(g_hat(&d, &g, (5.0, 6.0)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn g_hat_matches_finite_difference_of_weighted_mean() {
        let (d, g) = parametric_fixture();
        let fam = ParametricFamily::Normal;
        let interval = (0.2, 0.6);
        let mean_at = |gamma: &[f64]| -> f64 {
            (0..d.n())
                .filter(|&i| d.t()[i] >= interval.0 && d.t()[i] <= interval.1)
                .map(|i| d.y()[i] / fam.density(d.t()[i], d.x_row(i), gamma))
                .sum::<f64>()
                / d.n() as f64
        };
        let analytic = g_hat(&d, &g, interval);
        for c in 0..g.dim() {
            let step = 1e-6;
            let mut up = g.gamma_hat.clone();
            let mut dn = g.gamma_hat.clone();
            up[c] += step;
            dn[c] -= step;
            let fd = -(mean_at(&up) - mean_at(&dn)) / (2.0 * step);
            assert!((fd - analytic[c]).abs() < 1e-4 * analytic[c].abs().max(1.0), "{c}: {fd} vs {}", analytic[c]);
        }
    }

    #[test]
    fn parametric_influence_reductions() {
        let (d, g) = parametric_fixture();
        let pair = reference_pair();
        let nu1 = nu_hat(&d, &g.p_hat, pair.upper.t);
        let nu2 = nu_hat(&d, &g.p_hat, pair.lower.t);
        let zeros = vec![0.0; g.dim()];
        let phi = influence_pa(&d, &g, &pair, &zeros, &zeros, nu1, nu2).unwrap();
        for (i, v) in phi.iter().enumerate() {
            let lead = |c: &Cell| if c.t_contains(d.t()[i]) { d.y()[i] / g.p_hat[i] } else { 0.0 };
            let expect = (lead(&pair.lower) - nu2) - (lead(&pair.upper) - nu1);
            assert!((v - expect).abs() < 1e-14);
        }
        let g1 = g_hat(&d, &g, pair.upper.t);
        let g2 = g_hat(&d, &g, pair.lower.t);
        let phi = influence_pa(&d, &g, &pair, &g1, &g2, nu1, nu2).unwrap();
        assert!(phi.iter().sum::<f64>().abs() / (d.n() as f64) < 1e-6);
        assert!(matches!(
            influence_pa(&d, &g, &pair, &[0.0], &g2, nu1, nu2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn assembled_invariants() {
        let (d, g) = parametric_fixture();
        let fit = GpsFit::Parametric(g);
        let pairs: Vec<CellPair> = build_ell_set(3).unwrap().ells.iter().map(CellPair::from).collect();
        let m = assemble_moments(&d, &pairs, &reference_pair(), &fit, 1e-6).unwrap();
        let n = d.n() as f64;
        for k in 0..m.len() {
            assert_eq!(m.nu_hat[k], m.nu2_hat[k] - m.nu1_hat[k]);
            let ms = m.phi_hat.column(k).iter().map(|v| v * v).sum::<f64>() / n;
            assert!((m.sigma_hat[k].powi(2) - ms).abs() < 1e-12);
            assert!(m.sigma_eps[k] >= 1e-6 * m.ref_sigma);
        }
        let neg = assemble_moments(&d.negated(), &pairs, &reference_pair(), &fit, 1e-6).unwrap();
        for k in 0..m.len() {
            assert!((neg.nu_hat[k] + m.nu_hat[k]).abs() < 1e-12);
            assert!((neg.sigma_hat[k] - m.sigma_hat[k]).abs() < 1e-12);
        }
        let big = assemble_moments(&d.scaled(3.0), &pairs, &reference_pair(), &fit, 1e-6).unwrap();
        for k in 0..m.len() {
            assert!((big.nu_hat[k] - 3.0 * m.nu_hat[k]).abs() < 1e-12);
            assert!((big.sigma_hat[k] - 3.0 * m.sigma_hat[k]).abs() < 1e-12);
        }
    }
}
