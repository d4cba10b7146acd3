//! Composite Gauss–Legendre quadrature with a panel-doubling error estimate.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 20;

/// Nodes and weights of the `ORDER`-point rule on `[-1, 1]`, found by Newton
/// iteration on the Legendre recurrence.
fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, t);
                for k in 1..n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
                let step = p1 / dp;
                t -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            out.push((t, 2.0 / ((1.0 - t * t) * dp * dp)));
        }
        out
    })
}

/// Integrals of every output of `f` over `[lo, hi]` split into `panels`
/// equal pieces.
fn composite<F>(f: &F, lo: f64, hi: f64, panels: usize, dim: usize) -> Vec<f64>
where
    F: Fn(f64, &mut [f64]),
{
    let mut total = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let h = (hi - lo) / panels as f64;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let mid = a + 0.5 * h;
        for &(t, w) in rule() {
            f(mid + 0.5 * h * t, &mut buf);
            for (acc, v) in total.iter_mut().zip(&buf) {
                *acc += 0.5 * h * w * v;
            }
        }
    }
    total
}

/// Integral estimates together with the largest relative change seen in
/// the last panel doubling.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub values: Vec<f64>,
    pub rel_error: f64,
}

/// Integrates the `dim` outputs of `f` over consecutive pieces delimited by
/// `breaks` (sorted, at least two entries), doubling the panel count until
/// the relative change drops below `rel_tol`.
pub fn integrate<F>(f: F, breaks: &[f64], dim: usize, rel_tol: f64) -> Result<Quadrature>
where
    F: Fn(f64, &mut [f64]),
{
    let run = |panels: usize| {
        let mut total = vec![0.0; dim];
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                for (acc, v) in total.iter_mut().zip(composite(&f, w[0], w[1], panels, dim)) {
                    *acc += v;
                }
            }
        }
        total
    };
    let mut panels = 4;
    let mut prev = run(panels);
    let mut rel_error = f64::INFINITY;
    while panels <= 4096 {
        panels *= 2;
        let next = run(panels);
        rel_error = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max);
        prev = next;
        if rel_error <= rel_tol {
            return Ok(Quadrature { values: prev, rel_error });
        }
    }
    Err(Error::numerical(format!(
        "quadrature did not converge: relative change {rel_error:.3e} after {panels} panels per piece (wanted {rel_tol:.1e})"
    )))
}
