use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::FittedFunction;
use crate::loss::Loss;

use super::basis::{build_hal_basis_capped, default_max_interaction, indicator, HalBasis, DEFAULT_COLUMN_CAP};
use super::cd::{CdLoss, CdOptions, CdProblem, CdSolution, Design};
use super::tv::{anchored_tv, lambda_max, solve_anchored_tv};

/// Which Lagrangian solver backs the constrained fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HalSolverKind {
    /// Exact dynamic program for one-dimensional squared-error problems,
    /// coordinate descent otherwise.
    #[default]
    Auto,
    CoordinateDescent,
}

#[derive(Debug, Clone)]
pub struct HalConfig {
    /// `None` means `min(d, 3)`.
    pub max_interaction: Option<usize>,
    pub column_cap: usize,
    pub solver: HalSolverKind,
    /// Relative slack allowed below `M` when matching the L1 constraint.
    pub bound_rel_tol: f64,
    /// Coordinate descent stops when no coordinate moves the objective by
    /// more than `cd_tol` times its starting scale.
    pub cd_tol: f64,
    pub max_sweeps: usize,
}

impl Default for HalConfig {
    fn default() -> Self {
        HalConfig {
            max_interaction: None,
            column_cap: DEFAULT_COLUMN_CAP,
            solver: HalSolverKind::Auto,
            bound_rel_tol: 1e-9,
            cd_tol: 1e-14,
            max_sweeps: 100_000,
        }
    }
}

impl HalConfig {
    pub fn max_interaction_for(&self, d: usize) -> usize {
        self.max_interaction.unwrap_or_else(|| default_max_interaction(d)).min(d)
    }

    pub fn basis_for(&self, s: &Sample) -> Result<HalBasis> {
        build_hal_basis_capped(s, self.max_interaction_for(s.d()), self.column_cap)
    }
}

/// One nonzero basis coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct HalTerm {
    pub subset: u32,
    pub knot: usize,
    pub beta: f64,
}

/// A scalar HAL function `beta0 + sum_t beta_t 1(knot_t,s <= x_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalComponent {
    pub(crate) beta0: f64,
    pub(crate) terms: Vec<HalTerm>,
    /// Knot coordinates, `d` per term.
    pub(crate) points: Vec<f64>,
    pub(crate) steps: Option<StepTable>,
}

/// Sorted thresholds with cumulative coefficient sums, for fast `d = 1`
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StepTable {
    cuts: Vec<f64>,
    cum: Vec<f64>,
}

impl HalComponent {
    pub(crate) fn new(beta0: f64, terms: Vec<HalTerm>, points: Vec<f64>, d: usize) -> Self {
        let mut c = HalComponent { beta0, terms, points, steps: None };
        if d == 1 && c.terms.iter().all(|t| t.subset == 1) {
            let mut order: Vec<usize> = (0..c.terms.len()).collect();
            order.sort_by(|&a, &b| c.points[a].total_cmp(&c.points[b]));
            let cuts: Vec<f64> = order.iter().map(|&k| c.points[k]).collect();
            let mut cum = Vec::with_capacity(order.len() + 1);
            let mut acc = 0.0;
            cum.push(0.0);
            for &k in &order {
                acc += c.terms[k].beta;
                cum.push(acc);
            }
            c.steps = Some(StepTable { cuts, cum });
        }
        c
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn terms(&self) -> &[HalTerm] {
        &self.terms
    }

    /// Coordinates of the knot of term `t`.
    pub fn knot_point(&self, t: usize, d: usize) -> &[f64] {
        &self.points[t * d..(t + 1) * d]
    }

    /// `|beta0| + sum |beta|`.
    pub fn l1(&self) -> f64 {
        self.beta0.abs() + self.terms.iter().map(|t| t.beta.abs()).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(st) = &self.steps {
            let idx = st.cuts.partition_point(|&c| c <= x[0]);
            return self.beta0 + st.cum[idx];
        }
        let d = x.len();
        let mut v = self.beta0;
        for (t, term) in self.terms.iter().enumerate() {
            if indicator(term.subset, &self.points[t * d..(t + 1) * d], x) {
                v += term.beta;
            }
        }
        v
    }
}

/// A fitted HAL function. Treatment-arm fits carry one component per arm,
/// each constrained by the same bound.
#[derive(Debug, Clone)]
pub struct HalFit {
    pub(crate) d: usize,
    pub(crate) n: usize,
    pub(crate) loss: Loss,
    pub(crate) bound_m: f64,
    pub(crate) components: Vec<HalComponent>,
    pub(crate) range: Vec<(f64, f64)>,
}

impl HalFit {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Training sample size.
    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    pub fn components(&self) -> &[HalComponent] {
        &self.components
    }

    /// Intercept of the first component.
    pub fn beta0(&self) -> f64 {
        self.components[0].beta0
    }

    /// Number of nonzero non-intercept coefficients over all components.
    pub fn n_terms(&self) -> usize {
        self.components.iter().map(|c| c.terms.len()).sum()
    }

    /// Per-component `|beta0| + sum |beta|`.
    pub fn variation_norms(&self) -> Vec<f64> {
        self.components.iter().map(HalComponent::l1).collect()
    }

    /// Largest component L1 norm; compare against `bound_m`.
    pub fn attained_l1(&self) -> f64 {
        self.variation_norms().into_iter().fold(0.0, f64::max)
    }

    pub(crate) fn assemble(s: &Sample, loss: Loss, bound_m: f64, components: Vec<HalComponent>) -> HalFit {
        let mut fit = HalFit { d: s.d(), n: s.n(), loss, bound_m, components, range: Vec::new() };
        fit.range = crate::fitted::ranges_of(&crate::fitted::predict_outputs(&fit, s));
        fit
    }
}

impl FittedFunction for HalFit {
    fn arity(&self) -> usize {
        self.components.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }

    fn label(&self) -> String {
        format!("hal(M={:.6})", self.bound_m)
    }
}

/// Variation norm `|beta0| + sum |beta|` of a HAL fit (largest component
/// for arm fits).
pub fn variation_norm(f: &HalFit) -> f64 {
    f.attained_l1()
}

pub fn fit_hal(s: &Sample, loss: Loss, m: f64, basis: &HalBasis) -> Result<HalFit> {
    fit_hal_with(s, loss, m, basis, &HalConfig::default())
}

pub fn fit_hal_with(s: &Sample, loss: Loss, m: f64, basis: &HalBasis, cfg: &HalConfig) -> Result<HalFit> {
    Ok(fit_hal_path(s, loss, &[m], basis, cfg)?.pop().expect("one bound in, one fit out"))
}

/// Fits for several bounds on the same data, sharing the Lagrangian path.
/// Output order follows `ms`.
pub fn fit_hal_path(s: &Sample, loss: Loss, ms: &[f64], basis: &HalBasis, cfg: &HalConfig) -> Result<Vec<HalFit>> {
    if let Some(bad) = ms.iter().find(|m| !(**m >= 0.0) || m.is_nan()) {
        return Err(Error::config(format!("variation-norm bound must be nonnegative, got {bad}")));
    }
    if basis.d() != s.d() {
        return Err(Error::config(format!(
            "basis has dimension {} but sample has {} covariates",
            basis.d(),
            s.d()
        )));
    }
    let mut order: Vec<usize> = (0..ms.len()).collect();
    order.sort_by(|&a, &b| ms[a].total_cmp(&ms[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| ms[i]).collect();

    let problems = component_problems(s, loss, basis)?;
    let mut per_component: Vec<Vec<HalComponent>> = Vec::with_capacity(problems.len());
    for p in &problems {
        per_component.push(p.solve_path(&sorted, basis, cfg)?);
    }

    let mut fits: Vec<Option<HalFit>> = vec![None; ms.len()];
    for (k, &i) in order.iter().enumerate() {
        let comps = per_component.iter().map(|c| c[k].clone()).collect();
        fits[i] = Some(HalFit::assemble(s, loss, ms[i], comps));
    }
    Ok(fits.into_iter().map(|f| f.expect("every bound fitted")).collect())
}

struct ComponentProblem {
    /// Covariate rows of this component's observations (row-major).
    x: Vec<f64>,
    z: Vec<f64>,
    logistic: bool,
    /// Knot indices allowed for this component.
    knots: Vec<usize>,
    /// Whether the knots are exactly this component's rows.
    knots_are_rows: bool,
}

fn component_problems(s: &Sample, loss: Loss, basis: &HalBasis) -> Result<Vec<ComponentProblem>> {
    let same_points = basis.n_knots() == s.n() && basis.knots_flat() == s.x_flat();
    match loss {
        Loss::SquaredError | Loss::Logistic => {
            if loss == Loss::Logistic && s.z().iter().any(|&z| z != 0.0 && z != 1.0) {
                return Err(Error::data("logistic HAL needs a binary 0/1 outcome"));
            }
            Ok(vec![ComponentProblem {
                x: s.x_flat().to_vec(),
                z: s.z().to_vec(),
                logistic: loss == Loss::Logistic,
                knots: (0..basis.n_knots()).collect(),
                knots_are_rows: same_points,
            }])
        }
        Loss::ArmSquaredError => {
            let a = s.treatment()?;
            (0..2u8)
                .map(|arm| {
                    let rows: Vec<usize> = (0..s.n()).filter(|&i| a[i] == arm).collect();
                    if rows.is_empty() {
                        return Err(Error::data(format!("treatment arm {arm} has no observations")));
                    }
                    let sub = s.subset(&rows);
                    let knots = if same_points { rows.clone() } else { (0..basis.n_knots()).collect() };
                    Ok(ComponentProblem {
                        x: sub.x_flat().to_vec(),
                        z: sub.z().to_vec(),
                        logistic: false,
                        knots,
                        knots_are_rows: same_points,
                    })
                })
                .collect()
        }
    }
}

/// A point on the Lagrangian path.
#[derive(Clone)]
struct PathPoint<S> {
    lambda: f64,
    l1: f64,
    sol: S,
}

/// Finds the smallest-penalty solution with `l1 <= m`, starting from a
/// feasible point `hi`. Uses geometric descent to bracket and then
/// Illinois regula falsi on `l1(lambda) - m`.
fn constrained_search<S: Clone>(
    m: f64,
    rel_tol: f64,
    lambda_floor: f64,
    mut hi: PathPoint<S>,
    solve: &mut dyn FnMut(f64, &S) -> Result<(f64, S)>,
) -> Result<PathPoint<S>> {
    let tight = |l1: f64| l1 >= m * (1.0 - rel_tol);
    if tight(hi.l1) || hi.lambda <= lambda_floor {
        return Ok(hi);
    }
    let mut lo: Option<PathPoint<S>> = None;
    while lo.is_none() {
        let lam = hi.lambda * 0.5;
        let (l1, sol) = solve(lam, &hi.sol)?;
        let p = PathPoint { lambda: lam, l1, sol };
        if l1 > m {
            lo = Some(p);
        } else {
            hi = p;
            if tight(hi.l1) || hi.lambda <= lambda_floor {
                return Ok(hi);
            }
        }
    }
    let lo = lo.expect("bracket found");
    let (mut a, mut fa) = (lo.lambda, lo.l1 - m);
    let (mut b, mut fb) = (hi.lambda, hi.l1 - m);
    let mut last_side = 0i8;
    for _ in 0..300 {
        if tight(hi.l1) || (b - a) <= 1e-15 * b {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let (l1, sol) = solve(c, &hi.sol)?;
        let fc = l1 - m;
        if fc > 0.0 {
            a = c;
            fa = fc;
            if last_side == -1 {
                fb *= 0.5;
            }
            last_side = -1;
        } else {
            b = c;
            fb = fc;
            hi = PathPoint { lambda: c, l1, sol };
            if last_side == 1 {
                fa *= 0.5;
            }
            last_side = 1;
        }
    }
    Ok(hi)
}

impl ComponentProblem {
    fn d(&self, basis: &HalBasis) -> usize {
        basis.d()
    }

    fn solve_path(&self, ms: &[f64], basis: &HalBasis, cfg: &HalConfig) -> Result<Vec<HalComponent>> {
        let d = self.d(basis);
        let use_dp = cfg.solver == HalSolverKind::Auto
            && d == 1
            && !self.logistic
            && self.knots_are_rows
            && basis.subsets() == [1];
        if use_dp {
            self.solve_path_dp(ms, basis, cfg)
        } else {
            self.solve_path_cd(ms, basis, cfg)
        }
    }

    fn solve_path_dp(&self, ms: &[f64], basis: &HalBasis, cfg: &HalConfig) -> Result<Vec<HalComponent>> {
        // group tied covariate values; canonical knot = smallest knot index
        let mut idx: Vec<usize> = (0..self.z.len()).collect();
        idx.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]).then(self.knots[a].cmp(&self.knots[b])));
        let mut values = Vec::new();
        let mut ybar = Vec::new();
        let mut w = Vec::new();
        let mut canon = Vec::new();
        for &i in &idx {
            if values.last() == Some(&self.x[i]) {
                let k = values.len() - 1;
                ybar[k] += self.z[i];
                w[k] += 1.0;
            } else {
                values.push(self.x[i]);
                ybar.push(self.z[i]);
                w.push(1.0);
                canon.push(self.knots[i]);
            }
        }
        for (y, wk) in ybar.iter_mut().zip(&w) {
            *y /= wk;
        }
        let _ = basis;

        let lmax = lambda_max(&ybar, &w);
        let zero = vec![0.0; values.len()];
        let mut start = PathPoint { lambda: lmax, l1: 0.0, sol: zero.clone() };
        let mut out = Vec::with_capacity(ms.len());
        let mut solve = |lam: f64, _warm: &Vec<f64>| -> Result<(f64, Vec<f64>)> {
            let th = solve_anchored_tv(&ybar, &w, lam);
            Ok((anchored_tv(&th), th))
        };
        for &m in ms {
            let theta = if m == 0.0 || lmax == 0.0 {
                zero.clone()
            } else {
                let p = constrained_search(m, cfg.bound_rel_tol, lmax * 1e-13, start.clone(), &mut solve)?;
                let th = p.sol.clone();
                start = p;
                th
            };
            let mut terms = Vec::new();
            let mut points = Vec::new();
            for k in 1..theta.len() {
                let jump = theta[k] - theta[k - 1];
                if jump != 0.0 {
                    terms.push(HalTerm { subset: 1, knot: canon[k], beta: jump });
                    points.push(values[k]);
                }
            }
            out.push(HalComponent::new(theta.first().copied().unwrap_or(0.0), terms, points, 1));
        }
        Ok(out)
    }

    fn solve_path_cd(&self, ms: &[f64], basis: &HalBasis, cfg: &HalConfig) -> Result<Vec<HalComponent>> {
        let d = basis.d();
        let allowed = {
            let mut mask = vec![false; basis.n_knots()];
            for &k in &self.knots {
                mask[k] = true;
            }
            mask
        };
        let design = Design::build(basis, &self.x, |j| allowed[j]);
        let problem = CdProblem::new(
            &design,
            &self.z,
            if self.logistic { CdLoss::Logistic } else { CdLoss::Squared },
            CdOptions { tol: cfg.cd_tol, max_sweeps: cfg.max_sweeps },
        );
        let lmax = problem.lambda_max();
        let zero = CdSolution::zero(design.ncols());
        let mut start = PathPoint { lambda: lmax, l1: 0.0, sol: zero.clone() };
        let mut solve = |lam: f64, warm: &CdSolution| -> Result<(f64, CdSolution)> {
            let mut sol = warm.clone();
            problem.solve(lam, &mut sol)?;
            Ok((sol.l1(), sol))
        };
        let mut out = Vec::with_capacity(ms.len());
        for &m in ms {
            let sol = if m == 0.0 || lmax == 0.0 {
                zero.clone()
            } else {
                let p = constrained_search(m, cfg.bound_rel_tol, lmax * 1e-13, start.clone(), &mut solve)?;
                let sol = p.sol.clone();
                start = p;
                sol
            };
            let mut terms = Vec::new();
            let mut points = Vec::new();
            for (j, &b) in sol.beta.iter().enumerate() {
                if b != 0.0 {
                    let (subset, knot) = design.ids[j];
                    terms.push(HalTerm { subset, knot, beta: b });
                    points.extend_from_slice(basis.knot(knot));
                }
            }
            out.push(HalComponent::new(sol.beta0, terms, points, d));
        }
        Ok(out)
    }
}
