#![allow(dead_code)]

use dosemono::sim::replication_rng;
use dosemono::Dataset;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Conditional-test designs on the simulation's `(X, T)` layout.
#[derive(Debug, Clone, Copy)]
pub enum CondDgp {
    /// `Y = T^2 + X + U_y`: increasing in `t` for every `x`.
    Increasing,
    /// `Y = 2(1 - 2X)T + U_y`: rising for `x < 1/2`, falling for `x > 1/2`,
    /// flat after averaging over `X`.
    Crossing,
}

pub fn conditional_sample(dgp: CondDgp, n: usize, master: u64, rep: usize) -> Dataset {
    let mut rng = replication_rng(master, rep);
    let (mut y, mut t, mut x) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi: f64 = rng.random();
        let ut: f64 = StandardNormal.sample(&mut rng);
        let uy: f64 = StandardNormal.sample(&mut rng);
        let ti = xi + 0.5 * ut;
        let yi = match dgp {
            CondDgp::Increasing => ti * ti + xi + uy,
            CondDgp::Crossing => 2.0 * (1.0 - 2.0 * xi) * ti + uy,
        };
        y.push(yi);
        t.push(ti);
        x.push(xi);
    }
    Dataset::new(y, t, x, 1).expect("simulated data are finite")
}

/// Composite Simpson rule on `[a, b]` with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}
