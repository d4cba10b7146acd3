use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use plugeff::series::{
    build_series_space, build_series_space_with, fit_series, read_series_text, select_k_cv, trig_term,
    write_series_text, RangeTransform, SeriesFit, SeriesKind, TensorLayout,
};
use plugeff::{
    cv_risk, empirical_risk, make_folds, predict, ConstantFit, ErrorKind, FittedFunction, FnFit, Loss, Sample,
    SharedFit,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Identity on x with a caller-chosen fitted range.
#[derive(Debug)]
struct Identity {
    range: Vec<(f64, f64)>,
}

impl FittedFunction for Identity {
    fn arity(&self) -> usize {
        1
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }
    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }
}

fn smooth_sample(n: usize, seed: u64, noise: f64) -> Sample {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = x
        .iter()
        .map(|&x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            (3.0 * x).sin() + x * x + noise * e
        })
        .collect();
    Sample::from_columns(x, z).unwrap()
}

fn init_fit(s: &Sample) -> SharedFit {
    Arc::new(plugeff::fitted::scalar_fn("init", |x| x[0] + 0.3 * x[0] * x[0], s))
}

/// Independent evaluation of the composed trig columns.
fn oracle_columns(u: f64, k: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut j = 1.0;
    while out.len() <= k {
        out.push((j * PI * u).sin());
        if out.len() <= k {
            out.push((j * PI * u).cos());
        }
        j += 1.0;
    }
    out
}

fn qr_oracle(rows: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let qr = a.qr();
    let qtz = qr.q().transpose() * DVector::from_column_slice(z);
    let r = qr.r();
    let beta = r.solve_upper_triangular(&qtz).unwrap();
    beta.iter().copied().collect()
}

#[test]
fn identity_projection_on_first_sine_is_four_over_pi_squared() {
    let n = 200_000;
    let x: Vec<f64> = (0..n).map(|i| -0.5 + (i as f64 + 0.5) / n as f64).collect();
    let s = Sample::from_columns(x.clone(), x.clone()).unwrap();
    let l = 0.5 / (1.0 + 2.0 * RangeTransform::PAD);
    let init: SharedFit = Arc::new(Identity { range: vec![(-l, l)] });
    let space = build_series_space(init, SeriesKind::TrigComposed, 1, &s).unwrap();
    let t = space.init_transforms()[0];
    assert!((t.lo() + 0.5).abs() < 1e-15 && (t.hi() - 0.5).abs() < 1e-15);
    let fit = fit_series(&space, &s, Loss::SquaredError).unwrap();

    // Simpson quadrature of <u, sin(pi u)> / <sin, sin> on [-1/2, 1/2].
    let m = 2000;
    let h = 1.0 / m as f64;
    let simpson = |g: &dyn Fn(f64) -> f64| {
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * g(-0.5 + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    let quad = simpson(&|u| u * (PI * u).sin()) / simpson(&|u| (PI * u).sin().powi(2));
    assert!((quad - 4.0 / (PI * PI)).abs() < 1e-10);
    let c = fit.coefficients(0);
    assert!((c[1] - quad).abs() < 1e-6, "sin coefficient {} vs {}", c[1], quad);
    assert!(c[0].abs() < 1e-10);
}

#[test]
fn coefficients_match_qr_oracle() {
    for seed in 0..5 {
        let s = smooth_sample(400, seed, 0.3);
        let init = init_fit(&s);
        let (lo, hi) = init.fitted_range()[0];
        let pad = 0.01 * (hi - lo);
        for k in [0, 3, 10, 25] {
            let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
            let fit = fit_series(&space, &s, Loss::SquaredError).unwrap();
            let rows: Vec<Vec<f64>> = s
                .rows()
                .map(|x| {
                    let v = x[0] + 0.3 * x[0] * x[0];
                    oracle_columns((v - (lo - pad)) / (hi - lo + 2.0 * pad) - 0.5, k)
                })
                .collect();
            let beta = qr_oracle(&rows, s.z());
            let a = DMatrix::from_fn(rows.len(), k + 1, |i, j| rows[i][j]);
            let sv = a.singular_values();
            if sv.max() / sv.min() <= 1e7 {
                for (a, b) in fit.coefficients(0).iter().zip(&beta) {
                    assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "seed {seed} k {k}: {a} vs {b}");
                }
            } else {
                // Coefficients of an ill-conditioned design are only determined
                // to cond * eps, and the oracle's own rounding of `u` is
                // amplified by the same factor; compare fitted values.
                let cond = sv.max() / sv.min();
                let tol = 1e-8f64.max(cond * 1e-16);
                for (x, row) in s.rows().zip(&rows) {
                    let want: f64 = row.iter().zip(&beta).map(|(c, b)| c * b).sum();
                    assert!((fit.eval1(x) - want).abs() <= tol * (1.0 + want.abs()), "seed {seed} k {k}, cond {cond:e}");
                }
            }
        }
    }
}

#[test]
fn risk_is_nonincreasing_in_k() {
    let s = smooth_sample(500, 7, 0.5);
    let init = init_fit(&s);
    let mut prev = f64::INFINITY;
    for k in 0..=30 {
        let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
        let fit = fit_series(&space, &s, Loss::SquaredError).unwrap();
        assert!(fit.risk() <= prev * (1.0 + 1e-9), "k {k}: {} > {prev}", fit.risk());
        prev = fit.risk();
    }
}

#[test]
fn one_hot_coefficients_reproduce_columns() {
    let s = smooth_sample(100, 1, 0.1);
    let init = init_fit(&s);
    let k = 12;
    let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
    let t = space.init_transforms()[0];
    for m in 0..=k {
        let mut coef = vec![0.0; k + 1];
        coef[m] = 1.0;
        let fit = SeriesFit::from_coefficients(space.clone(), vec![coef], Loss::SquaredError, &s).unwrap();
        for x in [-3.0, -1.0, -0.2, 0.0, 0.7, 1.0, 5.0] {
            let u = t.apply(x + 0.3 * x * x);
            let want = oracle_columns(u, k)[m];
            assert!((fit.eval1(&[x]) - want).abs() <= 1e-12);
            assert!((trig_term(m, u) - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn identity_is_never_in_the_span() {
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
    let s = Sample::from_columns(x.clone(), x).unwrap();
    let init: SharedFit = Arc::new(plugeff::fitted::scalar_fn("id", |x| x[0], &s));
    for k in 0..=50 {
        let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
        let fit = fit_series(&space, &s, Loss::SquaredError).unwrap();
        assert!(fit.risk() > 0.0, "identity represented exactly at K={k}");
    }
}

#[test]
fn k_zero_gives_means() {
    let s = smooth_sample(300, 3, 1.0);
    let space = build_series_space(init_fit(&s), SeriesKind::TrigComposed, 0, &s).unwrap();
    let fit = fit_series(&space, &s, Loss::SquaredError).unwrap();
    let mean = s.z().iter().sum::<f64>() / s.n() as f64;
    assert!((fit.eval1(&[0.3]) - mean).abs() < 1e-10);

    let a: Vec<u8> = (0..s.n()).map(|i| (i % 3 == 0) as u8).collect();
    let sa = Sample::new(s.x_flat().to_vec(), 1, s.z().to_vec(), Some(a.clone())).unwrap();
    let init2: SharedFit = Arc::new(FnFit::new(
        "pair",
        2,
        |x: &[f64], out: &mut [f64]| {
            out[0] = x[0];
            out[1] = x[0] * x[0] - x[0];
        },
        &sa,
    ));
    let space = build_series_space(init2, SeriesKind::TrigComposed, 0, &sa).unwrap();
    let fit = fit_series(&space, &sa, Loss::ArmSquaredError).unwrap();
    for arm in 0..2u8 {
        let zs: Vec<f64> = (0..sa.n()).filter(|&i| a[i] == arm).map(|i| sa.z()[i]).collect();
        let m = zs.iter().sum::<f64>() / zs.len() as f64;
        assert!((fit.eval(&[0.1])[arm as usize] - m).abs() < 1e-10);
    }
}

#[test]
fn arm_fits_decouple() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let n = 600;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.4) as u8).collect();
    let z: Vec<f64> = (0..n).map(|i| x[i].cos() + a[i] as f64 * x[i] + 0.2 * rng.gen::<f64>()).collect();
    let s = Sample::new(x, 1, z, Some(a)).unwrap();
    let mu0: SharedFit = Arc::new(plugeff::fitted::scalar_fn("m0", |x| x[0].cos(), &s));
    let mu1: SharedFit = Arc::new(plugeff::fitted::scalar_fn("m1", |x| x[0].cos() + x[0], &s));
    let init: SharedFit = Arc::new(plugeff::ArmFit::new(mu0.clone(), mu1.clone(), &s).unwrap());
    let joint = fit_series(
        &build_series_space(init.clone(), SeriesKind::TrigComposed, 6, &s).unwrap(),
        &s,
        Loss::ArmSquaredError,
    )
    .unwrap();
    for (arm, mu) in [(0u8, &mu0), (1u8, &mu1)] {
        let sub = s.arm(arm).unwrap();
        // The arm's space uses the range of that arm's initial fit over the
        // full sample, as in the joint fit.
        let (lo, hi) = init.fitted_range()[arm as usize];
        let m = mu.clone();
        let scalar: SharedFit = Arc::new(Identity { range: vec![(lo, hi)] });
        let composed = Arc::new(ComposeFit { inner: m, outer: scalar });
        let single =
            fit_series(&build_series_space(composed, SeriesKind::TrigComposed, 6, &sub).unwrap(), &sub, Loss::SquaredError)
                .unwrap();
        for (p, q) in joint.coefficients(arm as usize).iter().zip(single.coefficients(0)) {
            assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()), "arm {arm}: {p} vs {q}");
        }
    }
}

/// `x -> inner(x)` but reporting `outer`'s fitted range.
#[derive(Debug)]
struct ComposeFit {
    inner: SharedFit,
    outer: SharedFit,
}

impl FittedFunction for ComposeFit {
    fn arity(&self) -> usize {
        1
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.eval_into(x, out)
    }
    fn fitted_range(&self) -> &[(f64, f64)] {
        self.outer.fitted_range()
    }
}

#[test]
fn exact_column_is_recovered() {
    let s = smooth_sample(300, 5, 0.0);
    let init = init_fit(&s);
    let space = build_series_space(init.clone(), SeriesKind::TrigComposed, 4, &s).unwrap();
    let t = space.init_transforms()[0];
    let z: Vec<f64> = s.rows().map(|x| (2.0 * PI * t.apply(init.eval1(x))).sin()).collect();
    let s2 = s.with_outcome(z).unwrap();
    let fit = fit_series(&space, &s2, Loss::SquaredError).unwrap();
    let c = fit.coefficients(0);
    assert!((c[3] - 1.0).abs() < 1e-8, "{c:?}");
    for (m, v) in c.iter().enumerate() {
        if m != 3 {
            assert!(v.abs() < 1e-8);
        }
    }
    assert!(fit.risk() < 1e-15);
}

#[test]
fn targeted_span_has_two_columns() {
    let s = smooth_sample(200, 9, 0.0);
    let init = init_fit(&s);
    let grad: SharedFit = Arc::new(plugeff::fitted::scalar_fn("g", |x| x[0].exp(), &s));
    let z: Vec<f64> = s.rows().map(|x| 2.0 * (x[0] + 0.3 * x[0] * x[0]) - 3.0 * x[0].exp()).collect();
    let s2 = s.with_outcome(z).unwrap();
    let space =
        build_series_space_with(init.clone(), SeriesKind::TargetedSpan, 5, &s2, Some(grad), TensorLayout::TotalDegree)
            .unwrap();
    assert_eq!(space.n_columns(), 2);
    let mut cols = Vec::new();
    space.columns_into(0, &[0.5], &mut cols);
    assert_eq!(cols, vec![0.5 + 0.3 * 0.25, 0.5f64.exp()]);
    let fit = fit_series(&space, &s2, Loss::SquaredError).unwrap();
    assert!((fit.coefficients(0)[0] - 2.0).abs() < 1e-8);
    assert!((fit.coefficients(0)[1] + 3.0).abs() < 1e-8);
    assert!(build_series_space(init, SeriesKind::TargetedSpan, 1, &s).is_err());
}

#[test]
fn tensor_layouts_have_expected_counts() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let n = 200;
    let x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let s = Sample::new(x, 2, z, None).unwrap();
    let init: SharedFit = Arc::new(plugeff::fitted::scalar_fn("f", |x| x[0] - x[1], &s));
    for (ku, kx) in [(0, 0), (1, 2), (3, 1), (4, 4)] {
        let sp = build_series_space_with(
            init.clone(),
            SeriesKind::TrigTensorGeneralized,
            0,
            &s,
            None,
            TensorLayout::Full { k_u: ku, k_x: kx },
        )
        .unwrap();
        assert_eq!(sp.n_columns(), (ku + 1) * (kx + 1) * (kx + 1));
    }
    // Total degree: K + 1 columns, nested, distinct, constant first, ordered
    // by total frequency.
    let big = build_series_space(init.clone(), SeriesKind::TrigTensorGeneralized, 40, &s).unwrap();
    assert_eq!(big.n_columns(), 41);
    let terms = big.tensor_terms();
    assert!(terms[0].iter().all(|&m| m == 0));
    let freq = |t: &Vec<u16>| t.iter().map(|&m| (m as usize).div_ceil(2)).sum::<usize>();
    assert!(terms.windows(2).all(|w| freq(&w[0]) <= freq(&w[1])));
    let mut sorted = terms.to_vec();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), terms.len());
    // Frequency-1 level over 3 variables has 6 members (sin/cos per variable).
    assert_eq!(terms.iter().filter(|t| freq(t) == 1).count(), 6);
    let small = build_series_space(init, SeriesKind::TrigTensorGeneralized, 10, &s).unwrap();
    assert_eq!(small.tensor_terms(), &terms[..11]);
}

#[test]
fn tensor_fit_matches_qr_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let n = 500;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z: Vec<f64> = x.iter().map(|&x| (4.0 * x).cos() + 0.1 * rng.gen::<f64>()).collect();
    let s = Sample::from_columns(x, z).unwrap();
    let init: SharedFit = Arc::new(plugeff::fitted::scalar_fn("f", |x| x[0].powi(3), &s));
    let sp = build_series_space(init, SeriesKind::TrigTensorGeneralized, 14, &s).unwrap();
    let fit = fit_series(&sp, &s, Loss::SquaredError).unwrap();
    let tu = sp.init_transforms()[0];
    let tx = sp.x_transforms()[0];
    let rows: Vec<Vec<f64>> = s
        .rows()
        .map(|x| {
            let u = oracle_columns(tu.apply(x[0].powi(3)), 20);
            let v = oracle_columns(tx.apply(x[0]), 20);
            sp.tensor_terms().iter().map(|t| u[t[0] as usize] * v[t[1] as usize]).collect()
        })
        .collect();
    let beta = qr_oracle(&rows, s.z());
    for (a, b) in fit.coefficients(0).iter().zip(&beta) {
        assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn degenerate_range_is_a_config_error() {
    let s = smooth_sample(50, 0, 0.1);
    let init: SharedFit = Arc::new(ConstantFit::new(2.0));
    let err = build_series_space(init, SeriesKind::TrigComposed, 3, &s).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(err.to_string().contains("constant"));
}

#[test]
fn cv_risks_match_brute_force() {
    let s = smooth_sample(300, 21, 0.4);
    let init = init_fit(&s);
    let plan = make_folds(s.n(), 5, 3).unwrap();
    let grid: Vec<usize> = (0..=12).collect();
    let sel = select_k_cv(init.clone(), SeriesKind::TrigComposed, &grid, &s, Loss::SquaredError, &plan).unwrap();
    for (&k, &r) in grid.iter().zip(&sel.cv_risks) {
        let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
        let brute = cv_risk(|train| fit_series(&space, train, Loss::SquaredError), Loss::SquaredError, &s, &plan).unwrap();
        assert!((brute - r).abs() <= 1e-9 * brute, "k {k}: {brute} vs {r}");
    }
    let best = sel.cv_risks.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(sel.cv_risks[grid.iter().position(|&k| k == sel.k_star).unwrap()], best);
    assert_eq!(sel.fit.k(), sel.k_star);
}

#[test]
fn noiseless_init_outcome_is_recovered() {
    let s = smooth_sample(500, 8, 0.0);
    let init = init_fit(&s);
    let s2 = s.with_outcome(predict(init.as_ref(), &s)).unwrap();
    let plan = make_folds(s.n(), 10, 1).unwrap();
    let grid: Vec<usize> = (0..=30).collect();
    let sel = select_k_cv(init, SeriesKind::TrigComposed, &grid, &s2, Loss::SquaredError, &plan).unwrap();
    let var = {
        let m = s2.z().iter().sum::<f64>() / s2.n() as f64;
        s2.z().iter().map(|z| (z - m).powi(2)).sum::<f64>() / s2.n() as f64
    };
    assert!(sel.fit.risk() < 1e-6 * var, "risk {} var {var}", sel.fit.risk());
    assert!(sel.k_star >= 1);
}

#[test]
fn logistic_series_solves_score_equation() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    let n = 800;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let z: Vec<f64> = x.iter().map(|&x| rng.gen_bool(1.0 / (1.0 + (-x).exp())) as u8 as f64).collect();
    let s = Sample::from_columns(x, z).unwrap();
    let init = init_fit(&s);
    let space = build_series_space(init, SeriesKind::TrigComposed, 5, &s).unwrap();
    let fit = fit_series(&space, &s, Loss::Logistic).unwrap();
    let mut score = vec![0.0; 6];
    let mut cols = Vec::new();
    for (i, x) in s.rows().enumerate() {
        space.columns_into(0, x, &mut cols);
        let p = 1.0 / (1.0 + (-fit.eval1(x)).exp());
        for (sc, c) in score.iter_mut().zip(&cols) {
            *sc += (s.z()[i] - p) * c / n as f64;
        }
    }
    assert!(score.iter().all(|v| v.abs() < 1e-8), "{score:?}");
    let zero = empirical_risk(&ConstantFit::new(0.0), Loss::Logistic, &s).unwrap();
    assert!(fit.risk() < zero);
}

#[test]
fn text_round_trip_is_exact() {
    let s = smooth_sample(150, 12, 0.2);
    let init = init_fit(&s);
    for kind in [SeriesKind::TrigComposed, SeriesKind::TrigTensorGeneralized] {
        let fit = fit_series(&build_series_space(init.clone(), kind, 7, &s).unwrap(), &s, Loss::SquaredError).unwrap();
        let mut buf = Vec::new();
        write_series_text(&fit, "init.hal", None, &mut buf).unwrap();
        let back = read_series_text(buf.as_slice(), |r| {
            assert_eq!(r, "init.hal");
            Ok(init.clone())
        })
        .unwrap();
        for x in [-0.9, 0.0, 0.33, 2.0] {
            assert_eq!(back.eval1(&[x]), fit.eval1(&[x]));
        }
        assert_eq!(back.k(), 7);
    }
    let bad = "plugeff-series 1\nkind trig\nk 2\nbogus 1\n";
    match read_series_text(bad.as_bytes(), |_| Ok(init.clone())) {
        Err(plugeff::Error::DataAt { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_never_worse_than_mean(seed in 0u64..1000, k in 0usize..15) {
        let s = smooth_sample(120, seed, 1.0);
        let space = build_series_space(init_fit(&s), SeriesKind::TrigComposed, k, &s).unwrap();
        let fit = fit_series(&space, &s, Loss::SquaredError).unwrap();
        let mean_risk = empirical_risk(&ConstantFit::mean_of(&s), Loss::SquaredError, &s).unwrap();
        prop_assert!(fit.risk() <= mean_risk * (1.0 + 1e-9));
    }
}
