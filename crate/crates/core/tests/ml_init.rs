use plugeff::ml_init::{
    bandwidth_grid, fit_boosting, fit_kernel, fit_kernel_cv, fit_poly, fit_poly_cv, legendre_all, BoostingConfig,
    BoostingObjective, KernelConfig, KernelKind,
};
use plugeff::rng::rng_from_seed;
use plugeff::{empirical_risk, make_folds, predict, Exec, FittedFunction, Loss, Sample};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn step_theta(x: f64) -> f64 {
    if x < -0.75 {
        1.0
    } else if x < -0.5 {
        std::f64::consts::PI
    } else if x < -0.25 {
        0.0
    } else if x < 0.25 {
        10.0 * x * x
    } else if x < 0.5 {
        2f64.sqrt()
    } else if x < 0.75 {
        (-1f64).exp()
    } else {
        3f64.cbrt()
    }
}

fn step_sample(n: usize, seed: u64) -> Sample {
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, 0.25).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = x.iter().map(|&v| step_theta(v) + noise.sample(&mut rng)).collect();
    Sample::from_columns(x, z).unwrap()
}

fn mse_vs_truth(f: &dyn FittedFunction, truth: impl Fn(f64) -> f64) -> f64 {
    let m = 4000;
    (0..m)
        .map(|k| {
            let x = -1.0 + 2.0 * (k as f64 + 0.5) / m as f64;
            (f.eval1(&[x]) - truth(x)).powi(2)
        })
        .sum::<f64>()
        / m as f64
}

#[test]
fn boosting_constant_outcome() {
    let s = Sample::from_columns((0..50).map(|i| i as f64).collect(), vec![2.5; 50]).unwrap();
    let f = fit_boosting(&s, &BoostingConfig::default()).unwrap();
    for x in [-3.0, 0.0, 17.5, 100.0] {
        assert_eq!(f.eval1(&[x]), 2.5);
    }
}

#[test]
fn boosting_single_stump_is_the_mean() {
    let s = step_sample(200, 1);
    let cfg = BoostingConfig { n_trees: 1, max_depth: 0, early_stopping: None, ..BoostingConfig::default() };
    let f = fit_boosting(&s, &cfg).unwrap();
    let mean = s.z().iter().sum::<f64>() / 200.0;
    for x in [-0.9, 0.0, 0.9] {
        assert!((f.eval1(&[x]) - mean).abs() < 1e-12);
    }
}

#[test]
fn boosting_staged_risk_nonincreasing() {
    let s = step_sample(500, 2);
    let cfg = BoostingConfig { n_trees: 150, early_stopping: None, seed: 4, ..BoostingConfig::default() };
    let f = fit_boosting(&s, &cfg).unwrap();
    let staged = f.staged_risk();
    assert_eq!(staged.len(), 151);
    for w in staged.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "risk went up: {} -> {}", w[0], w[1]);
    }
    let final_risk = empirical_risk(&f, Loss::SquaredError, &s).unwrap();
    assert!((final_risk - staged[150]).abs() < 1e-10);
}

#[test]
fn boosting_is_deterministic_given_seed() {
    let s = step_sample(300, 3);
    let cfg = BoostingConfig { seed: 9, ..BoostingConfig::default() };
    let a = predict(&fit_boosting(&s, &cfg).unwrap(), &s);
    let b = predict(&fit_boosting(&s, &cfg).unwrap(), &s);
    assert_eq!(a, b);
    let c = predict(&fit_boosting(&s, &BoostingConfig { seed: 10, ..cfg }).unwrap(), &s);
    assert_ne!(a, c);
}

#[test]
fn boosting_beats_polynomial_on_step_function() {
    let s = step_sample(2000, 5);
    let plan = make_folds(2000, 10, 5).unwrap();
    let boost = fit_boosting(&s, &BoostingConfig { seed: 5, ..BoostingConfig::default() }).unwrap();
    let poly = fit_poly_cv(&s, 20, &plan, Exec::default()).unwrap();
    let mb = mse_vs_truth(&boost, step_theta);
    let mp = mse_vs_truth(&poly.fit, step_theta);
    assert!(mb < mp, "boosting {mb} vs poly {mp}");
}

#[test]
fn logistic_boosting_returns_probabilities() {
    let mut rng = rng_from_seed(6);
    let n = 1500;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a: Vec<f64> = x
        .iter()
        .map(|&v| if rng.gen::<f64>() < 1.0 / (1.0 + v.exp()) { 1.0 } else { 0.0 })
        .collect();
    let s = Sample::from_columns(x, a).unwrap();
    let cfg = BoostingConfig { objective: BoostingObjective::Logistic, seed: 1, ..BoostingConfig::default() };
    let f = fit_boosting(&s, &cfg).unwrap();
    let err = mse_vs_truth(&f, |v| 1.0 / (1.0 + v.exp()));
    assert!(err < 0.01, "propensity error {err}");
    for v in predict(&f, &s) {
        assert!(v > 0.0 && v < 1.0);
    }
    assert!(fit_boosting(&step_sample(20, 1), &cfg).is_err());
}

#[test]
fn kernel_limits() {
    let s = step_sample(100, 7);
    let mean = s.z().iter().sum::<f64>() / 100.0;
    let wide = fit_kernel(&s, KernelConfig { bandwidth: 1e6, kernel: KernelKind::Gaussian }).unwrap();
    assert!((wide.eval1(&[0.3]) - mean).abs() < 1e-9);

    let one = Sample::from_columns(vec![0.2], vec![4.0]).unwrap();
    let f = fit_kernel(&one, KernelConfig { bandwidth: 0.1, kernel: KernelKind::Gaussian }).unwrap();
    assert_eq!(f.eval1(&[-5.0]), 4.0);
    assert_eq!(f.eval1(&[0.25]), 4.0);

    let narrow = fit_kernel(&s, KernelConfig { bandwidth: 1e-9, kernel: KernelKind::Gaussian }).unwrap();
    let x3 = s.row(3)[0];
    assert!((narrow.eval1(&[x3]) - s.z()[3]).abs() < 1e-12);
}

#[test]
fn kernel_nearest_neighbour_fallback_is_flagged() {
    let s = Sample::from_columns(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
    let f = fit_kernel(&s, KernelConfig { bandwidth: 0.01, kernel: KernelKind::Epanechnikov }).unwrap();
    assert_eq!(f.fallback_count(), 0);
    assert_eq!(f.eval1(&[0.4]), 1.0);
    assert_eq!(f.eval1(&[5.0]), 3.0);
    assert_eq!(f.fallback_count(), 2);
}

#[test]
fn kernel_cv_picks_an_interior_bandwidth() {
    let mut rng = rng_from_seed(8);
    let n = 1000;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = x.iter().map(|&v| (10.0 * v).cos() + Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
    let s = Sample::from_columns(x, z).unwrap();
    let plan = make_folds(n, 10, 1).unwrap();
    let grid = bandwidth_grid(&s);
    assert_eq!(grid.len(), 20);
    let sel = fit_kernel_cv(&s, KernelKind::Gaussian, &grid, &plan, Exec::default()).unwrap();
    assert!(sel.selected > grid[0] && sel.selected < grid[19], "h = {}", sel.selected);
    assert!(mse_vs_truth(&sel.fit, |v| (10.0 * v).cos()) < 0.05);
}

#[test]
fn poly_recovers_a_line_and_a_constant() {
    let x: Vec<f64> = (0..30).map(|i| i as f64 / 7.0).collect();
    let line: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
    let s = Sample::from_columns(x.clone(), line).unwrap();
    let plan = make_folds(30, 10, 2).unwrap();
    let sel = fit_poly_cv(&s, 8, &plan, Exec::default()).unwrap();
    assert_eq!(sel.selected, 1);
    assert!(empirical_risk(&sel.fit, Loss::SquaredError, &s).unwrap() < 1e-20);

    let c = Sample::from_columns(x, vec![3.25; 30]).unwrap();
    let sel = fit_poly_cv(&c, 8, &plan, Exec::default()).unwrap();
    assert_eq!(sel.selected, 0);
    assert!((sel.fit.eval1(&[100.0]) - 3.25).abs() < 1e-12);
}

#[test]
fn poly_loo_recovers_monomial_coefficients() {
    let truth = [0.5, -1.0, 0.25, 2.0];
    let x: Vec<f64> = (0..25).map(|i| -1.3 + i as f64 * 0.11).collect();
    let z: Vec<f64> = x.iter().map(|&v| truth.iter().rev().fold(0.0, |acc, c| acc * v + c)).collect();
    let s = Sample::from_columns(x, z).unwrap();
    let plan = make_folds(25, 25, 0).unwrap();
    let sel = fit_poly_cv(&s, 6, &plan, Exec::default()).unwrap();
    assert_eq!(sel.selected, 3);
    let coef = sel.fit.monomial_coefficients();
    for (c, t) in coef.iter().zip(truth) {
        assert!((c - t).abs() < 1e-8, "{coef:?}");
    }
}

#[test]
fn poly_high_degree_stays_finite() {
    let s = step_sample(60, 9);
    for p in [15, 25, 40, 80] {
        let f = fit_poly(&s, p).unwrap();
        assert!(predict(&f, &s).iter().all(|v| v.is_finite()));
    }
}

#[test]
fn legendre_matches_closed_forms() {
    for &t in &[-1.0, -0.3, 0.0, 0.45, 1.0] {
        let p = legendre_all(t, 4);
        assert!((p[2] - 0.5 * (3.0 * t * t - 1.0)).abs() < 1e-15);
        assert!((p[3] - 0.5 * (5.0 * t * t * t - 3.0 * t)).abs() < 1e-15);
        assert!((p[4] - (35.0 * t.powi(4) - 30.0 * t * t + 3.0) / 8.0).abs() < 1e-14);
    }
}

#[test]
fn epanechnikov_window_sums_match_direct_weights() {
    let s = step_sample(3000, 17);
    for &h in &[0.003, 0.05, 0.4, 3.0] {
        let f = fit_kernel(&s, KernelConfig { bandwidth: h, kernel: KernelKind::Epanechnikov }).unwrap();
        for k in 0..101 {
            let q = -1.1 + 2.2 * k as f64 / 100.0;
            let (mut num, mut den) = (0.0, 0.0);
            for (&x, &z) in s.x_flat().iter().zip(s.z()) {
                let u = (q - x) / h;
                if u.abs() < 1.0 {
                    num += (1.0 - u * u) * z;
                    den += 1.0 - u * u;
                }
            }
            if den > 0.0 {
                let got = f.eval1(&[q]);
                assert!((got - num / den).abs() < 1e-10, "h={h} q={q}: {got} vs {}", num / den);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_predictions_are_convex_combinations(seed in 0u64..5000, h in 0.001f64..2.0, q in -2.0f64..2.0, epa in any::<bool>()) {
        let s = step_sample(40, seed);
        let kernel = if epa { KernelKind::Epanechnikov } else { KernelKind::Gaussian };
        let f = fit_kernel(&s, KernelConfig { bandwidth: h, kernel }).unwrap();
        let (lo, hi) = s.z_range();
        let v = f.eval1(&[q]);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }
}
