#![allow(dead_code)]
//! Independent reference solvers shared by the integration tests.

/// Euclidean projection onto `{b : ||b||_1 <= r}` (sort-based).
pub fn project_l1_ball(v: &[f64], r: f64) -> Vec<f64> {
    if r <= 0.0 {
        return vec![0.0; v.len()];
    }
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - r) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Dense design `[1, columns...]` with rows `x`.
pub struct Dense {
    pub rows: Vec<Vec<f64>>,
}

impl Dense {
    pub fn mul(&self, b: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().zip(b).map(|(x, y)| x * y).sum()).collect()
    }

    pub fn tmul(&self, v: &[f64]) -> Vec<f64> {
        let p = self.rows[0].len();
        let mut out = vec![0.0; p];
        for (r, vi) in self.rows.iter().zip(v) {
            for (o, x) in out.iter_mut().zip(r) {
                *o += x * vi;
            }
        }
        out
    }

    /// Upper bound on the largest eigenvalue of `X^T X` (Frobenius norm squared).
    pub fn frob2(&self) -> f64 {
        self.rows.iter().flatten().map(|x| x * x).sum()
    }
}

/// 1-D HAL design: intercept plus `1(x_j <= x)` for every training point.
pub fn hal_dense_1d(x: &[f64]) -> Dense {
    Dense {
        rows: x
            .iter()
            .map(|&xi| std::iter::once(1.0).chain(x.iter().map(|&xj| if xj <= xi { 1.0 } else { 0.0 })).collect())
            .collect(),
    }
}

/// Full-interaction 2-D HAL design over the training rows.
pub fn hal_dense_2d(x: &[[f64; 2]]) -> Dense {
    let subsets: [u32; 3] = [1, 2, 3];
    Dense {
        rows: x
            .iter()
            .map(|xi| {
                let mut r = vec![1.0];
                for s in subsets {
                    for xj in x {
                        let ok = (0..2).all(|k| s & (1 << k) == 0 || xj[k] <= xi[k]);
                        r.push(if ok { 1.0 } else { 0.0 });
                    }
                }
                r
            })
            .collect(),
    }
}

#[derive(Clone, Copy)]
pub enum OracleLoss {
    Squared,
    Logistic,
}

pub fn oracle_risk(loss: OracleLoss, eta: &[f64], z: &[f64]) -> f64 {
    let n = z.len() as f64;
    match loss {
        OracleLoss::Squared => eta.iter().zip(z).map(|(e, z)| (z - e).powi(2)).sum::<f64>() / n,
        OracleLoss::Logistic => eta
            .iter()
            .zip(z)
            .map(|(e, z)| -z * e + if *e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() })
            .sum::<f64>()
            / n,
    }
}

/// Accelerated projected gradient (FISTA with restarts) for
/// `min R_n(X b) s.t. ||b||_1 <= m`. Returns the optimal risk.
pub fn fista_l1_ball(x: &Dense, z: &[f64], m: f64, loss: OracleLoss, iters: usize) -> f64 {
    let n = z.len() as f64;
    let p = x.rows[0].len();
    let lip = match loss {
        OracleLoss::Squared => 2.0 * x.frob2() / n,
        OracleLoss::Logistic => 0.25 * x.frob2() / n,
    };
    let step = 1.0 / lip;
    let grad = |b: &[f64]| -> Vec<f64> {
        let eta = x.mul(b);
        let r: Vec<f64> = match loss {
            OracleLoss::Squared => eta.iter().zip(z).map(|(e, z)| 2.0 * (e - z) / n).collect(),
            OracleLoss::Logistic => eta.iter().zip(z).map(|(e, z)| (1.0 / (1.0 + (-e).exp()) - z) / n).collect(),
        };
        x.tmul(&r)
    };
    let risk = |b: &[f64]| oracle_risk(loss, &x.mul(b), z);
    let mut b = vec![0.0; p];
    let mut y = b.clone();
    let mut t = 1.0f64;
    let mut best = risk(&b);
    for _ in 0..iters {
        let g = grad(&y);
        let cand: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let nb = project_l1_ball(&cand, m);
        let r = risk(&nb);
        if r > best {
            // restart momentum
            t = 1.0;
            y = b.clone();
            continue;
        }
        best = r;
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = nb.iter().zip(&b).map(|(a, o)| a + (t - 1.0) / nt * (a - o)).collect();
        b = nb;
        t = nt;
    }
    best
}
