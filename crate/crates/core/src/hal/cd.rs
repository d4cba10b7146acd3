//! Cyclic coordinate descent for the L1-penalized HAL Lagrangian
//!
//! ```text
//! minimize  R_n(beta0 + X beta) + lambda (|beta0| + ||beta||_1)
//! ```
//!
//! over a deduplicated 0/1 design stored as sorted row lists.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::loss::{expit, softplus};

use super::basis::{indicator, HalBasis};

/// Distinct non-constant indicator columns evaluated on a training set.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n: usize,
    pub rows: Vec<Vec<u32>>,
    /// `(subset mask, knot index)` of the canonical representative.
    pub ids: Vec<(u32, usize)>,
}

impl Design {
    /// Columns of `basis` restricted to knots accepted by `keep_knot`,
    /// evaluated at `x` (row-major, `basis.d()` columns). Identical columns
    /// collapse onto the first one in basis order; the all-ones column is
    /// dropped because it duplicates the intercept.
    pub fn build(basis: &HalBasis, x: &[f64], keep_knot: impl Fn(usize) -> bool) -> Design {
        let d = basis.d();
        let n = x.len() / d;
        let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for &s in basis.subsets() {
            for j in 0..basis.n_knots() {
                if !keep_knot(j) {
                    continue;
                }
                let knot = basis.knot(j);
                let col: Vec<u32> = (0..n)
                    .filter(|&i| indicator(s, knot, &x[i * d..(i + 1) * d]))
                    .map(|i| i as u32)
                    .collect();
                if col.is_empty() || col.len() == n || seen.contains_key(&col) {
                    continue;
                }
                seen.insert(col.clone(), rows.len());
                rows.push(col);
                ids.push((s, j));
            }
        }
        Design { n, rows, ids }
    }

    pub fn ncols(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CdLoss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone)]
pub(crate) struct CdSolution {
    pub beta0: f64,
    pub beta: Vec<f64>,
}

impl CdSolution {
    pub fn zero(p: usize) -> Self {
        CdSolution { beta0: 0.0, beta: vec![0.0; p] }
    }

    pub fn l1(&self) -> f64 {
        self.beta0.abs() + self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CdOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub(crate) struct CdProblem<'a> {
    pub design: &'a Design,
    pub z: &'a [f64],
    pub loss: CdLoss,
    pub opts: CdOptions,
    /// Objective scale used for the stopping rule.
    scale: f64,
    /// Gradient scale (`lambda_max`) used to judge KKT optimality.
    grad_scale: f64,
}

impl<'a> CdProblem<'a> {
    pub fn new(design: &'a Design, z: &'a [f64], loss: CdLoss, opts: CdOptions) -> Self {
        let n = z.len() as f64;
        let scale = match loss {
            CdLoss::Squared => z.iter().map(|z| z * z).sum::<f64>() / n,
            CdLoss::Logistic => std::f64::consts::LN_2,
        }
        .max(1e-300);
        let mut p = CdProblem { design, z, loss, opts, scale, grad_scale: 0.0 };
        p.grad_scale = p.lambda_max();
        p
    }

    fn eta(&self, sol: &CdSolution) -> Vec<f64> {
        let mut eta = vec![sol.beta0; self.design.n];
        for (col, &b) in self.design.rows.iter().zip(&sol.beta) {
            if b != 0.0 {
                for &i in col {
                    eta[i as usize] += b;
                }
            }
        }
        eta
    }

    fn risk(&self, eta: &[f64]) -> f64 {
        let n = self.z.len() as f64;
        match self.loss {
            CdLoss::Squared => self.z.iter().zip(eta).map(|(z, e)| (z - e).powi(2)).sum::<f64>() / n,
            CdLoss::Logistic => self.z.iter().zip(eta).map(|(z, e)| -z * e + softplus(*e)).sum::<f64>() / n,
        }
    }

    /// Smallest penalty with the all-zero solution optimal.
    pub fn lambda_max(&self) -> f64 {
        let n = self.z.len() as f64;
        let (resid, scale): (Vec<f64>, f64) = match self.loss {
            CdLoss::Squared => (self.z.to_vec(), 2.0 / n),
            CdLoss::Logistic => (self.z.iter().map(|z| z - 0.5).collect(), 1.0 / n),
        };
        let mut best = resid.iter().sum::<f64>().abs();
        for col in &self.design.rows {
            let s: f64 = col.iter().map(|&i| resid[i as usize]).sum();
            best = best.max(s.abs());
        }
        best * scale
    }

    /// Solves the penalized problem, warm-started from `sol`.
    pub fn solve(&self, lambda: f64, sol: &mut CdSolution) -> Result<()> {
        match self.loss {
            CdLoss::Squared => {
                let n = self.design.n as f64;
                let w = vec![2.0 / n; self.design.n];
                let eta = self.eta(sol);
                let mut resid: Vec<f64> = self.z.iter().zip(&eta).map(|(z, e)| z - e).collect();
                self.weighted_cd(lambda, &w, &mut resid, sol)
            }
            CdLoss::Logistic => self.solve_logistic(lambda, sol),
        }
    }

    /// Minimizes `1/2 sum_i w_i (r_i)^2 + lambda * l1` where `r` is the
    /// working residual of the current coefficients; updates `r` in place.
    fn weighted_cd(&self, lambda: f64, w: &[f64], resid: &mut [f64], sol: &mut CdSolution) -> Result<()> {
        let design = self.design;
        let p = design.ncols();
        let hess: Vec<f64> = design.rows.iter().map(|c| c.iter().map(|&i| w[i as usize]).sum()).collect();
        let h0: f64 = w.iter().sum();
        let tol = self.opts.tol * self.scale;

        let update_intercept = |sol: &mut CdSolution, resid: &mut [f64]| -> f64 {
            let g: f64 = resid.iter().zip(w).map(|(r, w)| w * r).sum();
            let old = sol.beta0;
            let new = soft(h0 * old + g, lambda) / h0;
            let delta = new - old;
            if delta != 0.0 {
                for r in resid.iter_mut() {
                    *r -= delta;
                }
                sol.beta0 = new;
            }
            h0 * delta * delta
        };
        let update = |j: usize, sol: &mut CdSolution, resid: &mut [f64]| -> f64 {
            let h = hess[j];
            if h <= 0.0 {
                return 0.0;
            }
            let col = &design.rows[j];
            let g: f64 = col.iter().map(|&i| w[i as usize] * resid[i as usize]).sum();
            let old = sol.beta[j];
            let new = soft(h * old + g, lambda) / h;
            let delta = new - old;
            if delta != 0.0 {
                for &i in col {
                    resid[i as usize] -= delta;
                }
                sol.beta[j] = new;
            }
            h * delta * delta
        };

        let mut sweeps = 0usize;
        loop {
            // full sweep
            let mut max_change = update_intercept(sol, resid);
            for j in 0..p {
                max_change = max_change.max(update(j, sol, resid));
            }
            sweeps += 1;
            if max_change <= tol {
                return Ok(());
            }
            // iterate on the active set until it settles
            let active: Vec<usize> = (0..p).filter(|&j| sol.beta[j] != 0.0).collect();
            loop {
                let mut change = update_intercept(sol, resid);
                for &j in &active {
                    change = change.max(update(j, sol, resid));
                }
                sweeps += 1;
                if change <= tol || sweeps >= self.opts.max_sweeps {
                    break;
                }
            }
            if sweeps >= self.opts.max_sweeps {
                let kkt = self.kkt_residual(lambda, w, resid, sol);
                if kkt <= 1e-10 * self.grad_scale.max(1e-300) {
                    return Ok(());
                }
                return Err(Error::numerical(format!(
                    "coordinate descent did not converge in {} sweeps (KKT residual {kkt:.3e})",
                    self.opts.max_sweeps
                )));
            }
        }
    }

    fn kkt_residual(&self, lambda: f64, w: &[f64], resid: &[f64], sol: &CdSolution) -> f64 {
        let viol = |g: f64, b: f64| {
            if b != 0.0 {
                (g - lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        };
        let g0: f64 = resid.iter().zip(w).map(|(r, w)| w * r).sum();
        let mut worst = viol(g0, sol.beta0);
        for (col, &b) in self.design.rows.iter().zip(&sol.beta) {
            let g: f64 = col.iter().map(|&i| w[i as usize] * resid[i as usize]).sum();
            worst = worst.max(viol(g, b));
        }
        worst
    }

    /// Proximal Newton (IRLS) outer loop with backtracking on the penalized
    /// objective.
    fn solve_logistic(&self, lambda: f64, sol: &mut CdSolution) -> Result<()> {
        let n = self.design.n as f64;
        let mut eta = self.eta(sol);
        let mut obj = self.risk(&eta) + lambda * sol.l1();
        for _ in 0..200 {
            let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
            let w: Vec<f64> = p.iter().map(|&p| (p * (1.0 - p)).max(1e-6) / n).collect();
            // working residual: (z - p) / w_i in the quadratic model
            let mut resid: Vec<f64> = p
                .iter()
                .zip(self.z)
                .zip(&w)
                .map(|((p, z), w)| (z - p) / n / w)
                .collect();
            let mut cand = sol.clone();
            self.weighted_cd(lambda, &w, &mut resid, &mut cand)?;

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let trial = blend(sol, &cand, step);
                let e = self.eta(&trial);
                let o = self.risk(&e) + lambda * trial.l1();
                if o <= obj + 1e-15 * obj.abs().max(1.0) {
                    accepted = Some((trial, e, o));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, e, o)) = accepted else {
                return Ok(());
            };
            let max_move = e.iter().zip(&eta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let decrease = obj - o;
            *sol = trial;
            eta = e;
            obj = o;
            if max_move < 1e-9 || decrease <= 1e-14 * obj.abs().max(1e-300) {
                return Ok(());
            }
        }
        Err(Error::numerical("IRLS coordinate descent did not converge in 200 outer iterations"))
    }
}

fn blend(a: &CdSolution, b: &CdSolution, t: f64) -> CdSolution {
    if t == 1.0 {
        return b.clone();
    }
    CdSolution {
        beta0: a.beta0 + t * (b.beta0 - a.beta0),
        beta: a.beta.iter().zip(&b.beta).map(|(x, y)| x + t * (y - x)).collect(),
    }
}
