//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs the desk-scale Monte Carlo studies (200 replicates each) and the
//! property suite. Exits non-zero on a FAIL only when
//! `PLUGEFF_ACCEPTANCE_STRICT=1`, so that `cargo test` still runs the
//! remaining suites; the FAIL lines and the summary are always printed.

mod common;

use std::sync::Arc;
use std::time::Instant;

use common::{fista_l1_ball, hal_dense_1d, hal_dense_2d, oracle_risk, OracleLoss};
use nalgebra::{DMatrix, DVector};
use plugeff::fitted::scalar_fn;
use plugeff::hal::{build_hal_basis, fit_hal, fit_hal_with, variation_norm, HalConfig, HalSolverKind};
use plugeff::ml_init::fit_poly;
use plugeff::series::{build_series_space, fit_series, SeriesKind};
use plugeff::simlab::{m_ratio, run_monte_carlo, McResult, ReproId, Scale};
use plugeff::summaries::{gradient_fit, one_step, plug_in, plug_in_value, Aux, Summary};
use plugeff::{empirical_risk, predict, ArmFit, ConstantFit, FittedFunction, Loss, Sample, SharedFit};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

struct Gate {
    outcomes: Vec<(usize, bool)>,
}

impl Gate {
    fn report(&mut self, id: usize, title: &str, details: &[(bool, String)]) {
        for (ok, d) in details {
            println!("      {} {d}", if *ok { "ok " } else { "BAD" });
        }
        let pass = details.iter().all(|(ok, _)| *ok);
        println!("{} [{id}] {title}", if pass { "PASS" } else { "FAIL" });
        self.outcomes.push((id, pass));
    }
}

fn run(id: ReproId) -> McResult {
    let cfg = id.config(Scale::Desk);
    let start = Instant::now();
    let res = run_monte_carlo(&cfg).unwrap_or_else(|e| panic!("{id} failed: {e}"));
    println!("      ({id}: {} replicates x n in {:?} in {:.0} s)", cfg.replicates, cfg.n_grid, start.elapsed().as_secs_f64());
    res
}

fn coverage(res: &McResult, est: &str, n: usize) -> f64 {
    res.cell(est, n).unwrap_or_else(|| panic!("no cell {est} at n={n}")).coverage
}

fn in_range(label: String, v: f64, lo: f64, hi: f64) -> (bool, String) {
    (v >= lo && v <= hi, format!("{label} = {v:.3} in [{lo}, {hi}]"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn criteria_1_2(gate: &mut Gate) {
    let res = run(ReproId::Table1);
    let mut d = Vec::new();
    for n in [500, 1000] {
        d.push(in_range(format!("coverage M.gcv+ n={n}"), coverage(&res, "M.gcv+", n), 0.93, 1.00));
        d.push(in_range(format!("coverage M.oracle n={n}"), coverage(&res, "M.oracle", n), 0.93, 1.00));
        d.push(in_range(format!("coverage M.cv n={n}"), coverage(&res, "M.cv", n), 0.0, 0.92));
    }
    gate.report(1, "Table 1 coverage (hal_exp, n in {500, 1000}, R = 200)", &d);

    let mut d = Vec::new();
    for n in [500, 1000] {
        let ratios: Vec<f64> = res.records_for("M.cv", n).filter_map(m_ratio).collect();
        d.push(in_range(format!("median M.cv / M.oracle n={n} ({} replicates)", ratios.len()), median(ratios), 0.25, 0.45));
    }
    gate.report(2, "Figure 3 bound ratio (same runs)", &d);
}

fn criterion_3(gate: &mut Gate) {
    let res = run(ReproId::Table2);
    let mut d = Vec::new();
    for n in [500, 2000] {
        d.push(in_range(format!("coverage xgb.trig n={n}"), coverage(&res, "xgb.trig", n), 0.91, 0.99));
        d.push(in_range(format!("coverage xgb.1step n={n}"), coverage(&res, "xgb.1step", n), 0.91, 0.99));
        d.push(in_range(format!("coverage xgb n={n}"), coverage(&res, "xgb", n), 0.82, 0.93));
    }
    d.push(in_range("coverage poly n=2000".into(), coverage(&res, "poly", 2000), 0.0, 0.85));
    gate.report(3, "Table 2 coverage (step_trig, n in {500, 2000}, R = 200)", &d);
}

fn criterion_4(gate: &mut Gate) {
    let res = run(ReproId::Fig5);
    let rel: Vec<f64> = res.cells.iter().map(|c| c.relative_mse).collect();
    let mut d: Vec<(bool, String)> =
        res.cells.iter().map(|c| (c.relative_mse.is_finite(), format!("{} n*MSE/xi2 = {:.3}", c.estimator, c.relative_mse))).collect();
    let spread = rel.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - rel.iter().cloned().fold(f64::INFINITY, f64::min);
    d.push((rel.len() == 5 && spread <= 0.5, format!("max - min over K = {spread:.3} <= 0.5")));
    gate.report(4, "Figure 5 flatness in K (step_trig, n = 2000, R = 200)", &d);
}

fn criterion_5(gate: &mut Gate) {
    let res = run(ReproId::Table4);
    let d = vec![
        in_range("coverage xgb.trig n=2000".into(), coverage(&res, "xgb.trig", 2000), 0.88, 1.0),
        in_range("coverage poly n=2000".into(), coverage(&res, "poly", 2000), 0.0, 0.75),
    ];
    gate.report(5, "Table 4 coverage (hte_step, n in {1000, 2000}, R = 200, 1% trimming)", &d);
}

fn criterion_7(gate: &mut Gate) {
    let mut d = Vec::new();
    for id in plugeff::simlab::ALL_REPRO_IDS {
        let cfg = id.config(Scale::Full);
        let top = *cfg.n_grid.iter().max().unwrap();
        let want = if cfg.dgp == plugeff::simlab::Dgp::HalExp { 10_000 } else { 20_000 };
        d.push((cfg.replicates == 1000 && top == want && cfg.validate().is_ok(), format!("{id} full scale: R = {}, n up to {top}", cfg.replicates)));
    }
    for id in [ReproId::Table3, ReproId::Table5] {
        let res = run(id);
        for n in [1000, 2000] {
            let cell = res.cell("kernel.trig", n).unwrap();
            d.push(in_range(format!("{id} relative MSE n={n}"), cell.relative_mse, 0.6, 1.3));
            d.push(in_range(format!("{id} coverage n={n}"), cell.coverage, 0.90, 1.0));
        }
    }
    gate.report(7, "Full-scale presets; Tables 3 and 5 qualitative (R = 200)", &d);
}

// ---- property suite -------------------------------------------------------

fn normal(rng: &mut Xoshiro256PlusPlus) -> f64 {
    StandardNormal.sample(rng)
}

fn random_1d(n: usize, seed: u64) -> Sample {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    Sample::from_columns(x, z).unwrap()
}

fn hal_oracle_equivalence() -> Check {
    let cd = HalConfig { solver: HalSolverKind::CoordinateDescent, ..HalConfig::default() };
    let mut worst: f64 = 0.0;
    for seed in 0..64u64 {
        let n = 1 + (seed as usize % 8);
        let s = random_1d(n, 500 + seed);
        let basis = build_hal_basis(&s, 1).map_err(|e| e.to_string())?;
        let dense = hal_dense_1d(&s.column(0));
        for &m in &[0.05, 0.3, 1.0, 2.5, 10.0] {
            let oracle = fista_l1_ball(&dense, s.z(), m, OracleLoss::Squared, 50_000);
            for cfg in [HalConfig::default(), cd.clone()] {
                let f = fit_hal_with(&s, Loss::SquaredError, m, &basis, &cfg).map_err(|e| e.to_string())?;
                let got = empirical_risk(&f, Loss::SquaredError, &s).unwrap();
                worst = worst.max((got - oracle).abs());
                ensure!((got - oracle).abs() <= 1e-6, "seed {seed} n {n} M {m}: hal {got} vs oracle {oracle}");
            }
        }
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(77);
    for rep in 0..12 {
        let n = 3 + rep % 6;
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [(rng.gen::<f64>() * 4.0).floor() / 4.0, rng.gen::<f64>()]).collect();
        let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let s = Sample::new(pts.iter().flatten().copied().collect(), 2, z.clone(), None).unwrap();
        let basis = build_hal_basis(&s, 2).unwrap();
        for &m in &[0.2, 1.0, 3.0] {
            let oracle = fista_l1_ball(&hal_dense_2d(&pts), &z, m, OracleLoss::Squared, 100_000);
            let got = empirical_risk(&fit_hal(&s, Loss::SquaredError, m, &basis).unwrap(), Loss::SquaredError, &s).unwrap();
            worst = worst.max((got - oracle).abs());
            ensure!((got - oracle).abs() <= 1e-6, "2-d rep {rep} M {m}: hal {got} vs oracle {oracle}");
        }
    }
    for rep in 0..8 {
        let n = 4 + rep % 5;
        let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let z: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();
        let s = Sample::from_columns(x.clone(), z.clone()).unwrap();
        let basis = build_hal_basis(&s, 1).unwrap();
        for &m in &[0.5, 2.0] {
            let oracle = fista_l1_ball(&hal_dense_1d(&x), &z, m, OracleLoss::Logistic, 100_000);
            let eta = predict(&fit_hal(&s, Loss::Logistic, m, &basis).unwrap(), &s);
            let got = oracle_risk(OracleLoss::Logistic, &eta, &z);
            worst = worst.max((got - oracle).abs());
            ensure!((got - oracle).abs() <= 1e-6, "logistic rep {rep} M {m}: hal {got} vs oracle {oracle}");
        }
    }
    println!("      largest objective gap {worst:.2e}");
    Ok(())
}

fn ledger_and_feasibility() -> Check {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for rep in 0..100u64 {
        let n = 5 + rng.gen_range(0..40);
        let s = random_1d(n, 1000 + rep);
        let basis = build_hal_basis(&s, 1).unwrap();
        let free = variation_norm(&fit_hal(&s, Loss::SquaredError, 1e6, &basis).unwrap());
        let m = rng.gen_range(0.01..5.0);
        let f = fit_hal(&s, Loss::SquaredError, m, &basis).map_err(|e| e.to_string())?;
        let c = &f.components()[0];
        let ledger = c.beta0().abs() + c.terms().iter().map(|t| t.beta.abs()).sum::<f64>();
        ensure!(variation_norm(&f) == ledger, "rep {rep}: ledger {} vs coefficients {ledger}", variation_norm(&f));
        ensure!(ledger <= m + 1e-8, "rep {rep}: infeasible {ledger} > {m}");
        if m < 0.9 * free {
            ensure!((ledger - m).abs() <= 1e-6 * m, "rep {rep}: binding bound {m} but attained {ledger}");
        }
    }
    Ok(())
}

fn trig_columns(u: f64, k: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut j = 1.0;
    while out.len() <= k {
        out.push((j * std::f64::consts::PI * u).sin());
        if out.len() <= k {
            out.push((j * std::f64::consts::PI * u).cos());
        }
        j += 1.0;
    }
    out
}

fn series_nesting_and_qr() -> Check {
    for seed in 0..5u64 {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let x: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = x.iter().map(|&x| (3.0 * x).sin() + x * x + 0.3 * normal(&mut rng)).collect();
        let s = Sample::from_columns(x, z).unwrap();
        let init: SharedFit = Arc::new(scalar_fn("init", |x| x[0] + 0.3 * x[0] * x[0], &s));
        let (lo, hi) = init.fitted_range()[0];
        let pad = 0.01 * (hi - lo);
        let mut prev = f64::INFINITY;
        for k in 0..=30 {
            let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
            let fit = fit_series(&space, &s, Loss::SquaredError).map_err(|e| e.to_string())?;
            ensure!(fit.risk() <= prev * (1.0 + 1e-9), "seed {seed}: risk rose at K={k}");
            prev = fit.risk();
            if ![0, 3, 10, 25].contains(&k) {
                continue;
            }
            let rows: Vec<Vec<f64>> = s
                .rows()
                .map(|x| trig_columns((x[0] + 0.3 * x[0] * x[0] - (lo - pad)) / (hi - lo + 2.0 * pad) - 0.5, k))
                .collect();
            let a = DMatrix::from_fn(rows.len(), k + 1, |i, j| rows[i][j]);
            let qr = a.clone().qr();
            let beta = qr.r().solve_upper_triangular(&(qr.q().transpose() * DVector::from_column_slice(s.z()))).unwrap();
            let sv = a.singular_values();
            let cond = sv.max() / sv.min();
            if cond <= 1e7 {
                for (got, want) in fit.coefficients(0).iter().zip(beta.iter()) {
                    ensure!((got - want).abs() <= 1e-8 * (1.0 + want.abs()), "seed {seed} K {k}: {got} vs QR {want}");
                }
            } else {
                let tol = 1e-8f64.max(cond * 1e-16);
                for (x, row) in s.rows().zip(&rows) {
                    let want: f64 = row.iter().zip(beta.iter()).map(|(c, b)| c * b).sum();
                    ensure!((fit.eval1(x) - want).abs() <= tol * (1.0 + want.abs()), "seed {seed} K {k}: fitted values differ");
                }
            }
        }
    }
    Ok(())
}

fn identity_residual_positive() -> Check {
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
    let s = Sample::from_columns(x.clone(), x).unwrap();
    let init: SharedFit = Arc::new(scalar_fn("id", |x| x[0], &s));
    let mut smallest = f64::INFINITY;
    for k in 0..=50 {
        let space = build_series_space(init.clone(), SeriesKind::TrigComposed, k, &s).unwrap();
        let r = fit_series(&space, &s, Loss::SquaredError).map_err(|e| e.to_string())?.risk();
        ensure!(r > 0.0, "identity represented exactly at K={k}");
        smallest = smallest.min(r);
    }
    println!("      smallest identity residual over K <= 50: {smallest:.3e}");
    Ok(())
}

fn regression_sample(n: usize, seed: u64) -> Sample {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = x.iter().map(|&x| x.sin() + 0.5 * normal(&mut rng)).collect();
    Sample::from_columns(x, z).unwrap()
}

fn gradient_finite_difference() -> Check {
    let s = regression_sample(400, 7);
    for summary in [Summary::smooth("sin", f64::sin, f64::cos), Summary::smooth("cube", |t| t * t * t, |t| 3.0 * t * t)] {
        let theta = |x: f64| x * x + 0.5 * x;
        let h = |x: f64| (3.0 * x).cos();
        let base: SharedFit = Arc::new(scalar_fn("theta", move |x| theta(x[0]), &s));
        let psi0 = plug_in_value(&summary, &base, &s, &Aux::none()).unwrap();
        let grad = gradient_fit(&summary, &base, &Aux::none(), &s).unwrap();
        let inner: f64 = s.rows().map(|x| h(x[0]) * grad.eval1(x)).sum::<f64>() / s.n() as f64;
        let delta = 1e-4;
        let moved: SharedFit = Arc::new(scalar_fn("moved", move |x| theta(x[0]) + delta * h(x[0]), &s));
        let fd = (plug_in_value(&summary, &moved, &s, &Aux::none()).unwrap() - psi0) / delta;
        let rel = (fd - inner).abs() / inner.abs();
        ensure!(rel <= 1e-2, "{}: finite difference {fd} vs gradient {inner} (rel {rel:.2e})", summary.name());
    }
    Ok(())
}

fn treatment_sample(n: usize, seed: u64) -> Sample {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a: Vec<u8> = x.iter().map(|&x| rng.gen_bool(1.0 / (1.0 + x.exp())) as u8).collect();
    let z = x
        .iter()
        .zip(&a)
        .map(|(&x, &a)| if a == 1 { x * x + 1.0 } else { x } + 0.25 * normal(&mut rng))
        .collect();
    Sample::new(x, 1, z, Some(a)).unwrap()
}

fn one_step_eif_zero() -> Check {
    let s = regression_sample(500, 3);
    let fit: SharedFit = Arc::new(fit_poly(&s, 3).unwrap());
    for summary in [Summary::MomentKappa(2), Summary::MomentKappa(3), Summary::smooth("exp", f64::exp, f64::exp)] {
        let r = one_step(&summary, &fit, &s, &Aux::none()).map_err(|e| e.to_string())?;
        ensure!(r.if_mean.abs() <= 1e-12, "{}: empirical EIF mean {}", summary.name(), r.if_mean);
    }
    let st = treatment_sample(500, 4);
    let m0: SharedFit = Arc::new(scalar_fn("mu0", |x| x[0], &st));
    let m1: SharedFit = Arc::new(scalar_fn("mu1", |x| x[0] * x[0] + 1.0, &st));
    let arms: SharedFit = Arc::new(ArmFit::new(m0, m1, &st).unwrap());
    let aux = Aux::with_propensity(Arc::new(scalar_fn("g", |x| 1.0 / (1.0 + x[0].exp()), &st)));
    for summary in [Summary::HteVariance, Summary::MeanCounterfactual] {
        let r = one_step(&summary, &arms, &st, &aux).map_err(|e| e.to_string())?;
        ensure!(r.if_mean.abs() <= 1e-12, "{}: empirical EIF mean {}", summary.name(), r.if_mean);
    }
    Ok(())
}

fn plug_in_nonnegative() -> Check {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    for rep in 0..1000 {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| 3.0 * normal(&mut rng) - 1.0).collect();
        let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let s = Sample::new(x, 1, z, Some(a)).unwrap();
        let degree = rep % 5;
        let f: SharedFit = Arc::new(fit_poly(&s, degree).unwrap());
        let r = plug_in(&Summary::MomentKappa(2), &f, &s, &Aux::none()).map_err(|e| e.to_string())?;
        ensure!(r.psi_hat >= 0.0, "rep {rep}: moment2 plug-in {}", r.psi_hat);
        let f0: SharedFit = Arc::new(fit_poly(&s.arm(0).unwrap(), degree).unwrap());
        let f1: SharedFit = Arc::new(fit_poly(&s.arm(1).unwrap(), degree).unwrap());
        let arms: SharedFit = Arc::new(ArmFit::new(f0, f1, &s).unwrap());
        let g: SharedFit = Arc::new(ConstantFit::new(0.5));
        let r = plug_in(&Summary::HteVariance, &arms, &s, &Aux::with_propensity(g)).map_err(|e| e.to_string())?;
        ensure!(r.psi_hat >= 0.0, "rep {rep}: hte_variance plug-in {}", r.psi_hat);
    }
    Ok(())
}

fn criterion_6(gate: &mut Gate) {
    let start = Instant::now();
    let checks: [(&str, fn() -> Check); 7] = [
        ("HAL matches the dense L1-ball oracle (n <= 8, gap <= 1e-6)", hal_oracle_equivalence),
        ("variation-norm ledger exact, bound feasible, 100 random fits", ledger_and_feasibility),
        ("series risk nested in K; coefficients match QR oracle (1e-8)", series_nesting_and_qr),
        ("identity residual positive for every K <= 50", identity_residual_positive),
        ("smooth-moment gradient matches finite differences (1e-2 at 1e-4)", gradient_finite_difference),
        ("one-step empirical EIF mean is zero (1e-12)", one_step_eif_zero),
        ("plug-in moment2 and hte_variance nonnegative, 1000 fits", plug_in_nonnegative),
    ];
    let mut d = Vec::new();
    for (name, f) in checks {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        d.push(match outcome {
            Ok(()) => (true, format!("{name} ({secs:.1} s)")),
            Err(e) => (false, format!("{name}: {e}")),
        });
    }
    let total = start.elapsed().as_secs_f64();
    d.push((total < 300.0, format!("suite time {total:.1} s < 300 s")));
    gate.report(6, "Property suite", &d);
}

fn main() {
    let start = Instant::now();
    let mut gate = Gate { outcomes: Vec::new() };
    criterion_6(&mut gate);
    criteria_1_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_7(&mut gate);

    gate.outcomes.sort_unstable();
    let failed: Vec<String> = gate.outcomes.iter().filter(|(_, p)| !p).map(|(id, _)| id.to_string()).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s{}",
        gate.outcomes.len() - failed.len(),
        gate.outcomes.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; FAILED: {}", failed.join(", ")) }
    );
    let strict = std::env::var("PLUGEFF_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
