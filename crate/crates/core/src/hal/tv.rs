//! Exact solver for the one-dimensional anchored total-variation problem
//!
//! ```text
//! minimize_theta  1/2 sum_k w_k (y_k - theta_k)^2 + lambda (|theta_1| + sum_k |theta_k - theta_{k-1}|)
//! ```
//!
//! which is the Lagrangian form of d = 1 HAL under squared error after
//! grouping tied covariate values. The solver is a dynamic program over
//! piecewise-linear derivative messages and runs in amortized O(m).

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
struct Knot {
    x: f64,
    da: f64,
    db: f64,
}

/// Solves the problem above for strictly positive weights and `lambda >= 0`.
pub fn solve_anchored_tv(y: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    let m = y.len();
    assert_eq!(m, w.len());
    if m == 0 {
        return Vec::new();
    }
    debug_assert!(w.iter().all(|&v| v > 0.0) && lambda >= 0.0);

    // Derivative of the current message: left of every knot it is
    // `al * t + bl`, crossing a knot adds `(da, db)`.
    let mut knots: VecDeque<Knot> = VecDeque::with_capacity(2 * m + 2);
    let (mut al, mut bl) = (w[0], -w[0] * y[0] - lambda);
    let (mut ar, mut br) = (w[0], -w[0] * y[0] + lambda);
    if lambda > 0.0 {
        knots.push_back(Knot { x: 0.0, da: 0.0, db: 2.0 * lambda });
    }
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];

    for k in 0..m - 1 {
        let t_lo = scan_left(&mut knots, al, bl, -lambda);
        let (a, b) = t_lo.1;
        knots.push_front(Knot { x: t_lo.0, da: a, db: b + lambda });
        lo[k] = t_lo.0;

        let t_hi = scan_right(&mut knots, ar, br, lambda);
        let (a, b) = t_hi.1;
        knots.push_back(Knot { x: t_hi.0, da: -a, db: lambda - b });
        hi[k] = t_hi.0;

        al = w[k + 1];
        bl = -lambda - w[k + 1] * y[k + 1];
        ar = w[k + 1];
        br = lambda - w[k + 1] * y[k + 1];
    }

    let mut theta = vec![0.0; m];
    theta[m - 1] = scan_left(&mut knots, al, bl, 0.0).0;
    for k in (0..m - 1).rev() {
        theta[k] = theta[k + 1].clamp(lo[k], hi[k]);
    }
    theta
}

/// Finds the smallest `t` where the derivative reaches `target`, consuming
/// knots to its left. Returns `t` and the linear piece active just right of
/// `t` (before any new knot is inserted).
fn scan_left(knots: &mut VecDeque<Knot>, mut a: f64, mut b: f64, target: f64) -> (f64, (f64, f64)) {
    while let Some(kn) = knots.front().copied() {
        if a * kn.x + b >= target {
            return ((target - b) / a, (a, b));
        }
        knots.pop_front();
        a += kn.da;
        b += kn.db;
        if a * kn.x + b >= target {
            return (kn.x, (a, b));
        }
    }
    ((target - b) / a, (a, b))
}

/// Mirror image of [`scan_left`]: largest `t` where the derivative is at most
/// `target`, consuming knots to its right. Returns the piece active just left
/// of `t`.
fn scan_right(knots: &mut VecDeque<Knot>, mut a: f64, mut b: f64, target: f64) -> (f64, (f64, f64)) {
    while let Some(kn) = knots.back().copied() {
        if a * kn.x + b <= target {
            return ((target - b) / a, (a, b));
        }
        knots.pop_back();
        a -= kn.da;
        b -= kn.db;
        if a * kn.x + b <= target {
            return (kn.x, (a, b));
        }
    }
    ((target - b) / a, (a, b))
}

/// `|theta_1| + sum |theta_k - theta_{k-1}|`.
pub fn anchored_tv(theta: &[f64]) -> f64 {
    match theta.first() {
        None => 0.0,
        Some(&t0) => t0.abs() + theta.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>(),
    }
}

/// Smallest `lambda` at which the solution is identically zero.
pub fn lambda_max(y: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    let mut best = 0.0f64;
    for (yk, wk) in y.iter().zip(w).rev() {
        acc += yk * wk;
        best = best.max(acc.abs());
    }
    best
}

pub fn objective(y: &[f64], w: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(w).zip(theta).map(|((y, w), t)| 0.5 * w * (y - t).powi(2)).sum();
    fit + lambda * anchored_tv(theta)
}
