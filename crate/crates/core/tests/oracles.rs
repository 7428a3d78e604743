//! Monte Carlo and closed-form oracles against the public API.

use rough_euler::analysis::harness::{
    lift_covariance_oracle, rate_experiment, LiftCovarianceConfig, RateConfig,
};
use rough_euler::constants::{qp_sum, qp_term, w_covariance, QpTable};
use rough_euler::fbm::{fbm_covariance, generate_fbm, rect_increment, FbmGenerator};
use rough_euler::field::{GeometricField, RotationField};
use rough_euler::lift::{lift_geometric, lift_window};
use rough_euler::limit::sample_w;
use rough_euler::numeric::mean_stderr;
use rough_euler::schemes::{
    reference_solution, run_scheme, sup_distance, taylor_milstein, third_order, SchemeKind,
};

fn within_se(estimate: (f64, f64), target: f64, k: f64) -> bool {
    (estimate.0 - target).abs() <= k * estimate.1
}

#[test]
fn covariance_closed_forms() {
    let direct = 0.5 * 2f64.powf(0.8);
    assert!((fbm_covariance(1.0, 2.0, 0.4).unwrap() - direct).abs() < 1e-14);
    assert!((direct - 0.87055).abs() < 1e-5);
    let rect = rect_increment(0.0, 1.0, 1.0, 2.0, 0.4).unwrap();
    assert!((rect - 0.5 * (2f64.powf(0.8) - 2.0)).abs() < 1e-14);
    assert!(rect < 0.0);
}

#[test]
fn fbm_second_moments() {
    let gen = FbmGenerator::new(0.4, 256, 1.0).unwrap();
    let (mut var, mut cross) = (Vec::new(), Vec::new());
    for s in 0..10_000 {
        let p = gen.generate(1, s);
        let (half, end) = (p.values[0][128], p.values[0][256]);
        var.push(end * end);
        cross.push(half * end);
    }
    assert!(within_se(mean_stderr(&var), 1.0, 3.0));
    assert!(within_se(mean_stderr(&cross), fbm_covariance(0.5, 1.0, 0.4).unwrap(), 3.0));
}

#[test]
fn diagonal_area_mean() {
    let (h_hurst, n) = (0.4, 64);
    let gen = FbmGenerator::new(h_hurst, n * 16, 1.0).unwrap();
    let mut xs = Vec::new();
    for s in 0..10_000 {
        let p = gen.generate(1, s);
        xs.push(lift_window(&p, 0, 16).unwrap().1[0]);
    }
    let h: f64 = 1.0 / n as f64;
    assert!(within_se(mean_stderr(&xs), 0.5 * h.powf(2.0 * h_hurst), 3.0));
}

#[test]
fn q0_and_p0_match_lift_covariances() {
    // At 10^5 paths the P(0) standard error is about 2.2%, so a 2% band needs 10^6.
    let cfg = LiftCovarianceConfig {
        lags: vec![0],
        reps: 1_000_000,
        refinement: 256,
        seed: 17,
        ..LiftCovarianceConfig::default()
    };
    let e = lift_covariance_oracle(&cfg).unwrap()[0];
    let (q, p) = qp_term(0, 0.4, 1 << 15).unwrap();
    assert!((e.q.value - q).abs() / q < 0.02, "Q(0) {q} vs {} ± {}", e.q.value, e.q.stderr);
    assert!((e.p.value - p).abs() / p.abs() < 0.02, "P(0) {p} vs {} ± {}", e.p.value, e.p.stderr);
    assert!(within_se((e.q.value, e.q.stderr), q, 3.0));
    assert!(within_se((e.p.value, e.p.stderr), p, 3.0));
}

#[test]
fn q_dominates_p_across_the_regime() {
    for h in [0.3, 0.33, 0.36, 0.4, 0.42, 0.45, 0.48] {
        let t = qp_sum(h, 32, 1 << 13).unwrap();
        assert!(t.q_sum > t.p_sum, "H = {h}");
        assert!(t.p_sum < 0.0, "H = {h}");
    }
}

#[test]
fn w_covariance_structure() {
    let t = QpTable::from_sums(0.4, 0.64, -0.12);
    let big_t: f64 = 2.0;
    let rate = big_t.powf(0.6);
    assert!((w_covariance(0.5, 0.7, 1, 2, 2, 1, 3, &t, big_t).unwrap() - rate * -0.12 * 0.5).abs() < 1e-14);
    assert!((w_covariance(2.0, 2.0, 1, 2, 1, 2, 3, &t, big_t).unwrap() - 0.64 * big_t.powf(1.6)).abs() < 1e-12);
    assert_eq!(w_covariance(1.0, 1.0, 1, 2, 1, 3, 3, &t, big_t).unwrap(), 0.0);
    assert!(w_covariance(1.0, 1.0, 0, 2, 1, 3, 3, &t, big_t).is_err());
}

#[test]
fn w_sample_moments() {
    let table = QpTable::from_sums(0.4, 0.64, -0.12);
    let (m, horizon) = (3, 1.5f64);
    let (mut v12, mut c12_21, mut c12_13) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..10_000 {
        let w = sample_w(&table, horizon, 4, m, s).unwrap();
        let total = |i: usize, j: usize| (0..4).map(|k| w[k * m * m + i * m + j]).sum::<f64>();
        v12.push(total(0, 1).powi(2));
        c12_21.push(total(0, 1) * total(1, 0));
        c12_13.push(total(0, 1) * total(0, 2));
    }
    let scale = horizon.powf(1.6);
    assert!(within_se(mean_stderr(&v12), 0.64 * scale, 3.0));
    assert!(within_se(mean_stderr(&c12_21), -0.12 * scale, 3.0));
    assert!(within_se(mean_stderr(&c12_13), 0.0, 3.0));
}

#[test]
fn scalar_third_order_step_is_cubic_exponential() {
    let x = 0.37;
    let y = third_order(&[x], 0.01, &GeometricField::default(), &[1.0]).unwrap();
    assert!((y.terminal()[0] - (1.0 + x + x * x / 2.0 + x * x * x / 6.0)).abs() < 1e-15);
}

#[test]
fn geometric_reference_error_decreases() {
    let f = GeometricField::default();
    let mut means = Vec::new();
    for n in [64usize, 256, 1024] {
        let errs: Vec<f64> = (0..40)
            .map(|s| {
                let p = generate_fbm(0.4, n * 32, 1.0, 1, 1000 + s).unwrap();
                let y = reference_solution(&p, &f, &[1.0], n).unwrap();
                let yn = run_scheme(SchemeKind::Modified, &p, n, &f, &[1.0]).unwrap();
                sup_distance(&y, &yn).unwrap()
            })
            .collect();
        means.push(mean_stderr(&errs).0);
    }
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    assert!(means[2] > 0.0);
}

#[test]
fn taylor_with_true_area_beats_modified_euler() {
    let f = RotationField::default();
    let n = 256;
    let (mut taylor, mut modified) = (0.0, 0.0);
    for s in 0..20 {
        let p = generate_fbm(0.4, n * 32, 1.0, 2, 50 + s).unwrap();
        let y = reference_solution(&p, &f, &[0.0, 0.0], n).unwrap();
        let lift = lift_geometric(&p, n).unwrap();
        taylor += sup_distance(&taylor_milstein(&lift, &f, &[0.0, 0.0]).unwrap(), &y).unwrap();
        modified += sup_distance(&run_scheme(SchemeKind::Modified, &p, n, &f, &[0.0, 0.0]).unwrap(), &y).unwrap();
    }
    assert!(taylor < 0.5 * modified, "taylor {taylor} modified {modified}");
}

#[test]
fn wong_zakai_and_modified_euler_both_converge() {
    let cfg = RateConfig {
        ns: vec![32, 64, 128, 256, 512],
        reps: 40,
        schemes: vec![SchemeKind::WongZakai, SchemeKind::Modified],
        seed: 8,
        ..RateConfig::default()
    };
    let exp = rate_experiment(&cfg, &RotationField::default(), &[]).unwrap();
    let wz = exp.report(SchemeKind::WongZakai).unwrap().fitted_slope;
    let me = exp.report(SchemeKind::Modified).unwrap().fitted_slope;
    assert!(wz < -0.15 && me < -0.15, "wong-zakai {wz} modified {me}");
}
