mod common;

use common::{conditional_sample, simpson, CondDgp};
use dosemono::conditional::{build_ellx_set, nu_hat_x, run_conditional_test, run_conditional_test_with, EllX, XPartition};
use dosemono::sim::{generate, replication_rng, DgpSpec};
use dosemono::{run_test, Dataset, Estimator, TestConfig};

#[test]
fn nu_hat_x_matches_quadrature_of_the_dgp1_regression() {
    let spec = DgpSpec::new(1, 100_000).unwrap();
    let d = generate(spec, &mut replication_rng(301, 0));
    let p: Vec<f64> = d.t().iter().zip(d.x()).map(|(&t, &x)| DgpSpec::propensity(t, x)).collect();
    let ellx = EllX { q: 2, k1: 1, k2: 0, kx: 0 };
    let block = |t0: f64, t1: f64| simpson(|x| simpson(|t| spec.regression(t, x), t0, t1, 200), 0.0, 0.5, 200);
    let expected = block(0.0, 0.5) - block(0.5, 1.0);
    let got = nu_hat_x(&d, &p, &ellx).unwrap();
    assert!((got - expected).abs() < 0.01, "nu_hat_x {got}, quadrature {expected}");
}

#[test]
fn whole_x_cell_collapses_to_the_unconditional_test() {
    for rep in 0..3 {
        let d = conditional_sample(CondDgp::Crossing, 400, 302, rep);
        let cfg = TestConfig { n_boot: 200, q_max: Some(3 + rep as u32), seed: rep as u64, ..TestConfig::default() };
        let plain = run_test(&d, &cfg, Estimator::Nonparametric).unwrap();
        let collapsed = run_conditional_test_with(&d, &cfg, XPartition::Whole).unwrap();
        assert_eq!(plain.statistic.to_bits(), collapsed.statistic.to_bits());
        assert_eq!(plain.critical_value.to_bits(), collapsed.critical_value.to_bits());
        assert_eq!(plain.p_value, collapsed.p_value);
    }
}

#[test]
fn zero_outcome_never_rejects() {
    let d = conditional_sample(CondDgp::Increasing, 300, 303, 0);
    let zero = Dataset::new(vec![0.0; d.n()], d.t().to_vec(), d.x().to_vec(), 1).unwrap();
    let r = run_conditional_test(&zero, &TestConfig { n_boot: 100, ..TestConfig::default() }).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert!(!r.reject);
}

#[test]
fn size_under_a_conditionally_increasing_design() {
    let reps = 200;
    let rejections = (0..reps)
        .filter(|&r| {
            let d = conditional_sample(CondDgp::Increasing, 400, 304, r);
            let cfg = TestConfig { n_boot: 200, seed: r as u64, ..TestConfig::default() };
            run_conditional_test(&d, &cfg).unwrap().reject
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    assert!(rate <= 0.1 + 0.05, "rejection rate {rate}");
}

#[test]
fn index_count_matches_the_closed_form() {
    for q_max in 2..=8u32 {
        let expected: u32 = (2..=q_max).map(|q| q * q * (q - 1) / 2).sum();
        assert_eq!(build_ellx_set(q_max).unwrap().ells.len() as u32, expected);
    }
}
