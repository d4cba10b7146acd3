use crate::cv::cv_argmin;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::SharedFit;
use crate::folds::FoldPlan;
use crate::loss::{softplus, Loss};
use crate::par::{try_map_range, Exec};

use super::fit::{component_rows, fit_series, logistic_newton, NestedLs, SeriesFit};
use super::space::{build_series_space, SeriesKind, SeriesSpace};

/// Outcome of [`select_k_cv`].
#[derive(Debug, Clone)]
pub struct KSelection {
    pub k_grid: Vec<usize>,
    pub cv_risks: Vec<f64>,
    pub k_star: usize,
    pub fit: SeriesFit,
}

/// `{0, 1, .., min(30, n / 10)}`.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    (0..=30.min(n / 10)).collect()
}

/// Chooses `K` by `plan`-fold cross-validation with the initial fit held
/// fixed, then refits on the full sample. Ties go to the smaller `K`.
pub fn select_k_cv(
    init: SharedFit,
    kind: SeriesKind,
    k_grid: &[usize],
    s: &Sample,
    loss: Loss,
    plan: &FoldPlan,
) -> Result<KSelection> {
    select_k_cv_with(init, kind, k_grid, s, loss, plan, Exec::default())
}

pub fn select_k_cv_with(
    init: SharedFit,
    kind: SeriesKind,
    k_grid: &[usize],
    s: &Sample,
    loss: Loss,
    plan: &FoldPlan,
    exec: Exec,
) -> Result<KSelection> {
    if k_grid.is_empty() {
        return Err(Error::config("K grid must not be empty"));
    }
    if k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("K grid must be strictly increasing"));
    }
    if kind == SeriesKind::TargetedSpan {
        return Err(Error::config("the targeted span has no K to select; fit it directly"));
    }
    if plan.n() != s.n() {
        return Err(Error::config("fold plan size does not match the sample"));
    }
    let k_max = *k_grid.last().unwrap();
    let space = build_series_space(init, kind, k_max, s)?;
    let cv_risks = nested_cv_risks(&space, k_grid, s, loss, plan, exec)?;
    let best = cv_argmin(&cv_risks).ok_or_else(|| Error::numerical("no finite CV risk over the K grid"))?;
    let k_star = k_grid[best];
    let fit = fit_series(&space.truncated(k_star)?, s, loss)?;
    Ok(KSelection { k_grid: k_grid.to_vec(), cv_risks, k_star, fit })
}

/// Held-out risks for each `K` in the grid; spans are nested so one design
/// matrix at the largest `K` serves every candidate.
fn nested_cv_risks(
    space: &SeriesSpace,
    k_grid: &[usize],
    s: &Sample,
    loss: Loss,
    plan: &FoldPlan,
    exec: Exec,
) -> Result<Vec<f64>> {
    if space.arity() != loss.arity() {
        return Err(Error::config(format!(
            "{} loss needs an initial fit with {} output(s), got {}",
            loss.name(),
            loss.arity(),
            space.arity()
        )));
    }
    let p_max = space.n_columns();
    let q = space.arity();
    let all: Vec<usize> = (0..s.n()).collect();
    let designs: Vec<Vec<f64>> = (0..q).map(|c| space.design(c, s, &all)).collect();
    let comp_of = |i: usize| -> usize {
        match loss {
            Loss::ArmSquaredError => s.a().map(|a| a[i] as usize).unwrap_or(0),
            _ => 0,
        }
    };
    let widths: Vec<usize> = k_grid.iter().map(|&k| (k + 1).min(p_max)).collect();

    let per_fold = try_map_range(exec, plan.k(), |f| -> Result<Vec<f64>> {
        let (train, test) = plan.split(f);
        let train_sample = s.subset(&train);
        let mut betas: Vec<Vec<Vec<f64>>> = vec![Vec::new(); q];
        for (comp, betas_c) in betas.iter_mut().enumerate() {
            let rows: Vec<usize> = component_rows(loss, &train_sample, comp)
                .map_err(|e| e.in_fold(f))?
                .into_iter()
                .map(|r| train[r])
                .collect();
            let z: Vec<f64> = rows.iter().map(|&i| s.z()[i]).collect();
            let mut design = Vec::with_capacity(rows.len() * p_max);
            for &i in &rows {
                design.extend_from_slice(&designs[comp][i * p_max..(i + 1) * p_max]);
            }
            match loss {
                Loss::Logistic => {
                    for &p in &widths {
                        let sub: Vec<f64> = design.chunks_exact(p_max).flat_map(|r| r[..p].iter().copied()).collect();
                        betas_c.push(logistic_newton(&sub, p, &z).map_err(|e| e.in_fold(f))?);
                    }
                }
                _ => {
                    let mut ls = NestedLs::new(&design, p_max, &z);
                    for &p in &widths {
                        if p > rows.len() {
                            betas_c.push(vec![f64::NAN; p]);
                            continue;
                        }
                        betas_c.push(ls.solve(p).map_err(|e| e.in_fold(f))?);
                    }
                }
            }
        }
        let mut totals = vec![0.0; widths.len()];
        for &i in &test {
            let comp = comp_of(i);
            let cols = &designs[comp][i * p_max..(i + 1) * p_max];
            let z = s.z()[i];
            for (t, (&p, beta)) in totals.iter_mut().zip(widths.iter().zip(&betas[comp])) {
                let pred: f64 = cols[..p].iter().zip(beta).map(|(a, b)| a * b).sum();
                *t += match loss {
                    Loss::Logistic => -z * pred + softplus(pred),
                    _ => (z - pred) * (z - pred),
                };
            }
        }
        Ok(totals.into_iter().map(|t| t / test.len() as f64).collect())
    })?;
    let mut risks = vec![0.0; widths.len()];
    for fold in &per_fold {
        for (r, v) in risks.iter_mut().zip(fold) {
            *r += v / plan.k() as f64;
        }
    }
    Ok(risks.into_iter().map(|r| if r.is_finite() { r } else { f64::INFINITY }).collect())
}
