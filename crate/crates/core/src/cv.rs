//! Cross-validated risk.

use crate::data::Sample;
use crate::error::Result;
use crate::fitted::FittedFunction;
use crate::folds::FoldPlan;
use crate::loss::{empirical_risk, Loss};
use crate::par::{try_map_range, Exec};

/// Average over folds of the held-out empirical risk of `fitter` trained on
/// the remaining folds. Per-fold mean risks are averaged with equal weight.
pub fn cv_risk<T, F>(fitter: F, loss: Loss, s: &Sample, plan: &FoldPlan) -> Result<f64>
where
    T: FittedFunction,
    F: Fn(&Sample) -> Result<T> + Sync + Send,
{
    cv_risk_with(Exec::Sequential, fitter, loss, s, plan)
}

pub fn cv_risk_with<T, F>(exec: Exec, fitter: F, loss: Loss, s: &Sample, plan: &FoldPlan) -> Result<f64>
where
    T: FittedFunction,
    F: Fn(&Sample) -> Result<T> + Sync + Send,
{
    let per_fold = try_map_range(exec, plan.k(), |f| {
        let (train, test) = plan.split(f);
        let fit = fitter(&s.subset(&train)).map_err(|e| e.in_fold(f))?;
        empirical_risk(&fit, loss, &s.subset(&test)).map_err(|e| e.in_fold(f))
    })?;
    Ok(per_fold.iter().sum::<f64>() / plan.k() as f64)
}

/// Index of the smallest value, preferring the earliest index among values
/// within `rel_tol * |min| + abs_tol` of the minimum. Candidate lists are
/// ordered by complexity, so this breaks ties toward the simpler model.
pub fn argmin_prefer_first(values: &[f64], rel_tol: f64, abs_tol: f64) -> Option<usize> {
    let min = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let cut = min + rel_tol * min.abs() + abs_tol;
    values.iter().position(|&v| v <= cut)
}

/// `k` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
}

/// Tie tolerance used by every CV selector in the crate.
pub(crate) fn cv_argmin(values: &[f64]) -> Option<usize> {
    argmin_prefer_first(values, 1e-10, 1e-14)
}
