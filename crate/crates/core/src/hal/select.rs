use crate::cv::{cv_argmin, log_grid};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::loss::{empirical_risk, Loss};
use crate::par::{try_map_range, Exec};

use super::fit::{fit_hal_path, HalConfig};

/// How the final bound was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundStrategy {
    /// A fixed, externally supplied bound.
    Oracle(f64),
    /// The CV-selected bound `M_n`.
    Cv,
    /// `M_n + F(M_1n, ..)`.
    Gcv,
    /// `M_n + F(..)` after inflating every argument by `epsilon`.
    GcvRelaxed { epsilon: f64, relaxation: Relaxation },
}

/// Additive: `M + eps`. Multiplicative: `(1 + eps) M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relaxation {
    Additive,
    #[default]
    Multiplicative,
}

/// Selected variation-norm bound plus the audit trail that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSelection {
    pub strategy: BoundStrategy,
    pub selected_m: f64,
    /// Candidate bounds evaluated by CV (empty for oracle bounds).
    pub candidates: Vec<f64>,
    /// Mean held-out risk per candidate.
    pub cv_risks: Vec<f64>,
    /// CV-selected bound for the target function.
    pub m_n: f64,
    /// Component bounds passed to `F` (before relaxation).
    pub component_ms: Vec<f64>,
}

impl BoundSelection {
    pub fn oracle(m: f64) -> BoundSelection {
        BoundSelection {
            strategy: BoundStrategy::Oracle(m),
            selected_m: m,
            candidates: Vec::new(),
            cv_risks: Vec::new(),
            m_n: f64::NAN,
            component_ms: Vec::new(),
        }
    }
}

/// 40 log-spaced bounds from 0.001 to 20 times the outcome range.
pub fn default_candidates(s: &Sample) -> Vec<f64> {
    let (lo, hi) = s.z_range();
    let top = (20.0 * (hi - lo)).max(0.01);
    log_grid(1e-3, top, 40)
}

pub fn select_m_cv(s: &Sample, loss: Loss, candidates: &[f64], plan: &FoldPlan) -> Result<BoundSelection> {
    select_m_cv_with(s, loss, candidates, plan, &HalConfig::default(), Exec::default())
}

/// k-fold CV over candidate bounds; ties go to the smaller bound.
pub fn select_m_cv_with(
    s: &Sample,
    loss: Loss,
    candidates: &[f64],
    plan: &FoldPlan,
    cfg: &HalConfig,
    exec: Exec,
) -> Result<BoundSelection> {
    if candidates.is_empty() {
        return Err(Error::config("candidate bound list is empty"));
    }
    if candidates.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) || candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("candidate bounds must be finite, nonnegative and strictly increasing"));
    }
    if plan.n() != s.n() {
        return Err(Error::config(format!("fold plan covers {} rows, sample has {}", plan.n(), s.n())));
    }
    let per_fold = try_map_range(exec, plan.k(), |f| {
        let (train, test) = plan.split(f);
        let tr = s.subset(&train);
        let te = s.subset(&test);
        let basis = cfg.basis_for(&tr).map_err(|e| e.in_fold(f))?;
        let fits = fit_hal_path(&tr, loss, candidates, &basis, cfg).map_err(|e| e.in_fold(f))?;
        fits.iter()
            .map(|fit| empirical_risk(fit, loss, &te))
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.in_fold(f))
    })?;
    let k = plan.k() as f64;
    let cv_risks: Vec<f64> = (0..candidates.len())
        .map(|c| per_fold.iter().map(|r| r[c]).sum::<f64>() / k)
        .collect();
    let best = cv_argmin(&cv_risks).ok_or_else(|| Error::numerical("every candidate bound had a non-finite CV risk"))?;
    let m = candidates[best];
    Ok(BoundSelection {
        strategy: BoundStrategy::Cv,
        selected_m: m,
        candidates: candidates.to_vec(),
        cv_risks,
        m_n: m,
        component_ms: Vec::new(),
    })
}

/// Enlarges a CV-selected bound to `M_n + F(M_1n, .., M_qn)`, relaxing every
/// argument by `epsilon` (additively or multiplicatively). `epsilon = 0`
/// gives the unrelaxed bound.
pub fn enlarge_m(
    selection: &BoundSelection,
    f: &dyn Fn(&[f64]) -> f64,
    component_ms: &[f64],
    epsilon: f64,
    relaxation: Relaxation,
) -> Result<BoundSelection> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::config(format!("relaxation epsilon must be finite and >= 0, got {epsilon}")));
    }
    let m_n = selection.m_n;
    if !m_n.is_finite() {
        return Err(Error::config("bound enlargement needs a CV-selected bound"));
    }
    let relax = |m: f64| match relaxation {
        Relaxation::Additive => m + epsilon,
        Relaxation::Multiplicative => m * (1.0 + epsilon),
    };
    let args: Vec<f64> = component_ms.iter().map(|&m| relax(m)).collect();
    let selected = relax(m_n) + f(&args);
    let strategy = if epsilon == 0.0 {
        BoundStrategy::Gcv
    } else {
        BoundStrategy::GcvRelaxed { epsilon, relaxation }
    };
    Ok(BoundSelection {
        strategy,
        selected_m: selected,
        candidates: selection.candidates.clone(),
        cv_risks: selection.cv_risks.clone(),
        m_n,
        component_ms: component_ms.to_vec(),
    })
}

/// Bound on `||theta0||_v + ||psi_dot o theta0||_v`:
/// `(B + 1) ||theta0||_v + |psi_dot(theta0(x_lower))|`, where `B` bounds
/// `|psi_dot'|` on `[-||theta0||_v, ||theta0||_v]`.
pub fn gradient_varnorm_bound(theta_varnorm: f64, psi_dot_prime_sup: f64, boundary_value_abs: f64) -> f64 {
    (psi_dot_prime_sup + 1.0) * theta_varnorm + boundary_value_abs
}
