//! Compactly supported Epanechnikov kernels and the bandwidth rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelOrder {
    #[serde(rename = "2")]
    Second,
    #[default]
    #[serde(rename = "4")]
    Fourth,
}

impl KernelOrder {
    pub fn from_order(r: u32) -> Result<Self> {
        match r {
            2 => Ok(KernelOrder::Second),
            4 => Ok(KernelOrder::Fourth),
            _ => Err(Error::Config(format!("kernel order must be 2 or 4, got {r}"))),
        }
    }

    pub fn order(&self) -> u32 {
        match self {
            KernelOrder::Second => 2,
            KernelOrder::Fourth => 4,
        }
    }
}

/// Epanechnikov-based kernel of order 2 or 4 supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Kernel {
    pub order: KernelOrder,
}

impl Kernel {
    pub const SUPPORT_HALFWIDTH: f64 = 1.0;

    pub fn new(order: KernelOrder) -> Self {
        Kernel { order }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.order {
            KernelOrder::Second => epanechnikov2(u),
            KernelOrder::Fourth => epanechnikov4(u),
        }
    }
}

#[inline]
pub fn epanechnikov2(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Fourth-order Epanechnikov: `(15/8)(1 - 7u^2/3) * (3/4)(1 - u^2)`.
#[inline]
pub fn epanechnikov4(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        let u2 = u * u;
        1.875 * (1.0 - 7.0 / 3.0 * u2) * 0.75 * (1.0 - u2)
    } else {
        0.0
    }
}

/// `K_h(u) = k(u/h) / h`.
pub fn scaled_kernel(u: f64, h: f64, kernel: Kernel) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
    }
    Ok(kernel.eval(u / h) / h)
}

/// Product of scaled kernels over coordinates. Returns 1 for an empty vector.
pub fn product_kernel(dx: &[f64], h: f64, kernel: Kernel) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
    }
    Ok(product_kernel_unchecked(dx.iter().copied(), h, kernel))
}

#[inline]
pub(crate) fn product_kernel_unchecked(dx: impl Iterator<Item = f64>, h: f64, kernel: Kernel) -> f64 {
    let inv_h = 1.0 / h;
    let mut acc = 1.0;
    for d in dx {
        let u = d * inv_h;
        if u.abs() > 1.0 {
            return 0.0;
        }
        acc *= kernel.eval(u) * inv_h;
    }
    acc
}

/// `h = a * n^(-1/5)`.
pub fn bandwidth(n: usize, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Config(format!("bandwidth scale must be positive, got {a}")));
    }
    if n == 0 {
        return Err(Error::Config("bandwidth needs n >= 1".into()));
    }
    Ok(a * (n as f64).powf(-0.2))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Composite Simpson on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let m = m + m % 2;
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn second_order_values() {
        assert_eq!(epanechnikov2(0.0), 0.75);
        assert_eq!(epanechnikov2(1.5), 0.0);
        assert!((simpson(epanechnikov2, -1.0, 1.0, 2000) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fourth_order_values() {
        assert_eq!(epanechnikov4(0.0), 45.0 / 32.0);
        assert_eq!(epanechnikov4(-0.3), epanechnikov4(0.3));
        let m2 = simpson(|u| u * u * epanechnikov4(u), -1.0, 1.0, 2000);
        assert!(m2.abs() < 1e-8, "{m2}");
    }

    #[test]
    fn kernel_moment_conditions() {
        for (k, order) in [(Kernel::new(KernelOrder::Second), 2), (Kernel::new(KernelOrder::Fourth), 4)] {
            let mass = simpson(|u| k.eval(u), -1.0, 1.0, 4000);
            assert!((mass - 1.0).abs() < 1e-6);
            for l in 1..order {
                let m = simpson(|u| u.powi(l) * k.eval(u), -1.0, 1.0, 4000);
                assert!(m.abs() < 1e-6, "order {order} moment {l} = {m}");
            }
            let m = simpson(|u| u.powi(order) * k.eval(u), -1.0, 1.0, 4000);
            assert!(m.abs() > 1e-3);
            assert_eq!(k.eval(1.0 + 1e-9), 0.0);
            assert_eq!(k.eval(-3.0), 0.0);
        }
    }

    #[test]
    fn scaled_kernel_values_and_mass() {
        let k2 = Kernel::new(KernelOrder::Second);
        assert_eq!(scaled_kernel(0.0, 0.5, k2).unwrap(), 1.5);
        assert_eq!(scaled_kernel(1.0, 0.5, k2).unwrap(), 0.0);
        assert!(scaled_kernel(0.0, 0.0, k2).is_err());
        for k in [k2, Kernel::new(KernelOrder::Fourth)] {
            for h in [0.1, 0.5, 2.0] {
                let mass = simpson(|u| scaled_kernel(u, h, k).unwrap(), -h, h, 4000);
                assert!((mass - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn product_kernel_values() {
        let k2 = Kernel::new(KernelOrder::Second);
        assert_eq!(product_kernel(&[0.0, 0.0], 1.0, k2).unwrap(), 0.5625);
        assert_eq!(product_kernel(&[0.0], 1.0, k2).unwrap(), 0.75);
        assert_eq!(product_kernel(&[0.1, 1.2], 1.0, k2).unwrap(), 0.0);
        assert_eq!(product_kernel(&[], 1.0, k2).unwrap(), 1.0);
        let a = product_kernel(&[0.1, -0.4, 0.25], 0.7, k2).unwrap();
        let b = product_kernel(&[0.25, 0.1, -0.4], 0.7, k2).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_rule() {
        assert!((bandwidth(800, 1.0).unwrap() - 0.262653).abs() < 1e-5);
        assert_eq!(bandwidth(1, 1.0).unwrap(), 1.0);
        assert!((bandwidth(400, 1.2).unwrap() - 0.362051).abs() < 1e-5);
        assert!(bandwidth(10, 0.0).is_err());
    }
}
