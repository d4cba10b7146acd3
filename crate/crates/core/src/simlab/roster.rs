//! Estimators compared in the simulation studies, sharing fits within a
//! replicate.

use std::cell::OnceCell;
use std::sync::Arc;

use crate::data::Sample;
use crate::error::{Error, ErrorKind, Result};
use crate::fitted::{ArmFit, SharedFit};
use crate::folds::{make_folds, FoldPlan};
use crate::hal::{
    default_candidates, enlarge_m, fit_hal_with, select_m_cv_with, BoundSelection, HalBasis, HalConfig, Relaxation,
};
use crate::loss::Loss;
use crate::ml_init::{
    bandwidth_grid, fit_boosting, fit_kernel_cv, fit_poly_cv, BoostingConfig, BoostingObjective, KernelKind,
    DEFAULT_MAX_DEGREE,
};
use crate::par::Exec;
use crate::rng::derive_seed;
use crate::series::{build_series_space, default_k_grid, fit_series, select_k_cv_with, SeriesKind};
use crate::summaries::{one_step, plug_in, Aux, EstimateReport, Summary};

use super::dgp::{Dgp, Targets};

/// Relaxation used by `M.gcv+`: every bound is inflated by the factor
/// `1 + 1/30`, which makes `M.gcv+ = 3.1 M.cv` for `P theta^2`.
pub const GCV_PLUS_EPSILON: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorSpec {
    /// HAL plug-in at the CV-selected bound.
    HalCv,
    /// HAL plug-in at `M.cv + ||psi_dot o theta||_v`, i.e. `3 M.cv`.
    HalGcv,
    /// As `HalGcv` after relaxing every bound by [`GCV_PLUS_EPSILON`].
    HalGcvPlus,
    /// HAL plug-in at the oracle bound `3 ||theta0||_v`.
    HalOracle,
    /// Plug-in of a CV-selected polynomial sieve (per arm for treatments).
    Poly,
    /// Plug-in of gradient boosting.
    Xgb,
    /// One-step correction of the boosting plug-in.
    Xgb1Step,
    /// Data-adaptive trigonometric series on the boosting fit, `K` by CV.
    XgbTrig,
    /// As `XgbTrig` with a fixed `K`.
    XgbTrigK(usize),
    /// Data-adaptive trigonometric series on a kernel-regression fit.
    KernelTrig,
    /// Returns the true value; for checking the harness itself.
    Oracle,
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::HalCv => "M.cv".into(),
            EstimatorSpec::HalGcv => "M.gcv".into(),
            EstimatorSpec::HalGcvPlus => "M.gcv+".into(),
            EstimatorSpec::HalOracle => "M.oracle".into(),
            EstimatorSpec::Poly => "poly".into(),
            EstimatorSpec::Xgb => "xgb".into(),
            EstimatorSpec::Xgb1Step => "xgb.1step".into(),
            EstimatorSpec::XgbTrig => "xgb.trig".into(),
            EstimatorSpec::XgbTrigK(k) => format!("xgb.trig.K{k}"),
            EstimatorSpec::KernelTrig => "kernel.trig".into(),
            EstimatorSpec::Oracle => "oracle".into(),
        }
    }

    pub fn from_name(s: &str) -> Result<EstimatorSpec> {
        Ok(match s {
            "M.cv" => EstimatorSpec::HalCv,
            "M.gcv" => EstimatorSpec::HalGcv,
            "M.gcv+" => EstimatorSpec::HalGcvPlus,
            "M.oracle" => EstimatorSpec::HalOracle,
            "poly" => EstimatorSpec::Poly,
            "xgb" => EstimatorSpec::Xgb,
            "xgb.1step" => EstimatorSpec::Xgb1Step,
            "xgb.trig" => EstimatorSpec::XgbTrig,
            "kernel.trig" => EstimatorSpec::KernelTrig,
            "oracle" => EstimatorSpec::Oracle,
            other => match other.strip_prefix("xgb.trig.K").and_then(|k| k.parse().ok()) {
                Some(k) => EstimatorSpec::XgbTrigK(k),
                None => {
                    return Err(Error::config(format!(
                        "unknown estimator `{other}` (expected M.cv, M.gcv, M.gcv+, M.oracle, poly, xgb, xgb.1step, \
                         xgb.trig, xgb.trig.K<k>, kernel.trig, oracle)"
                    )))
                }
            },
        })
    }

    fn is_hal(&self) -> bool {
        matches!(self, EstimatorSpec::HalCv | EstimatorSpec::HalGcv | EstimatorSpec::HalGcvPlus | EstimatorSpec::HalOracle)
    }

    /// Config error when the estimator cannot run on `dgp`.
    pub fn check(&self, dgp: &Dgp) -> Result<()> {
        let summary = dgp.summary();
        if self.is_hal() && dgp.has_treatment() {
            return Err(Error::config(format!("{} supports single-arm processes only", self.name())));
        }
        if matches!(self, EstimatorSpec::HalGcv | EstimatorSpec::HalGcvPlus)
            && !matches!(summary, Summary::MomentKappa(2))
        {
            return Err(Error::config(format!(
                "{} needs the bound on ||psi_dot o theta||_v, implemented for the moment2 summary only",
                self.name()
            )));
        }
        if *self == EstimatorSpec::HalOracle && dgp.oracle_bound().is_none() {
            return Err(Error::config(format!("M.oracle needs a known variation norm, unavailable for {}", dgp.name())));
        }
        Ok(())
    }
}

/// Result of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub psi_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub degenerate: bool,
    /// Selected tuning parameters, e.g. `("M", 4.1)` or `("K", 3.0)`.
    pub tuning: Vec<(String, f64)>,
}

impl Outcome {
    fn from_report(r: &EstimateReport, tuning: Vec<(String, f64)>) -> Outcome {
        Outcome {
            psi_hat: r.psi_hat,
            se: r.ci.se,
            ci_lo: r.ci.lo,
            ci_hi: r.ci.hi,
            degenerate: r.ci.degenerate,
            tuning,
        }
    }
}

type Cached<T> = OnceCell<std::result::Result<T, (ErrorKind, String)>>;

fn cached<T: Clone>(cell: &Cached<T>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    cell.get_or_init(|| f().map_err(|e| (e.kind(), e.to_string())))
        .clone()
        .map_err(|(kind, msg)| match kind {
            ErrorKind::Config => Error::config(msg),
            ErrorKind::Data => Error::data(msg),
            _ => Error::numerical(msg),
        })
}

/// Fits reused by several estimators on one replicate.
pub(crate) struct ReplicateContext<'a> {
    dgp: Dgp,
    s: &'a Sample,
    summary: Summary,
    targets: Targets,
    folds: usize,
    seed: u64,
    plan: Cached<FoldPlan>,
    hal_basis: Cached<Arc<HalBasis>>,
    hal_cv: Cached<BoundSelection>,
    boosting: Cached<SharedFit>,
    boosting_propensity: Cached<SharedFit>,
    kernel: Cached<SharedFit>,
    kernel_propensity: Cached<SharedFit>,
}

// Streams mixed into the replicate seed for each stochastic step.
const STREAM_FOLDS: u64 = 1;
const STREAM_BOOST: u64 = 2;
const STREAM_ARM_FOLDS: u64 = 10;

impl<'a> ReplicateContext<'a> {
    pub(crate) fn new(dgp: Dgp, s: &'a Sample, targets: Targets, folds: usize, seed: u64) -> Self {
        ReplicateContext {
            dgp,
            s,
            summary: dgp.summary(),
            targets,
            folds,
            seed,
            plan: OnceCell::new(),
            hal_basis: OnceCell::new(),
            hal_cv: OnceCell::new(),
            boosting: OnceCell::new(),
            boosting_propensity: OnceCell::new(),
            kernel: OnceCell::new(),
            kernel_propensity: OnceCell::new(),
        }
    }

    fn plan(&self) -> Result<FoldPlan> {
        cached(&self.plan, || make_folds(self.s.n(), self.folds, derive_seed(self.seed, STREAM_FOLDS)))
    }

    fn arm_plan(&self, arm: &Sample, a: u64) -> Result<FoldPlan> {
        make_folds(arm.n(), self.folds, derive_seed(self.seed, STREAM_ARM_FOLDS + a))
    }

    fn hal_basis(&self) -> Result<Arc<HalBasis>> {
        cached(&self.hal_basis, || HalConfig::default().basis_for(self.s).map(Arc::new))
    }

    fn hal_cv(&self) -> Result<BoundSelection> {
        cached(&self.hal_cv, || {
            let plan = self.plan()?;
            let cands = default_candidates(self.s);
            select_m_cv_with(self.s, Loss::SquaredError, &cands, &plan, &HalConfig::default(), Exec::Sequential)
        })
    }

    fn boost_cfg(&self, stream: u64) -> BoostingConfig {
        BoostingConfig { seed: derive_seed(self.seed, stream), ..BoostingConfig::default() }
    }

    /// Boosting fit of the regression function (per arm for treatments).
    fn boosting(&self) -> Result<SharedFit> {
        cached(&self.boosting, || {
            if self.dgp.has_treatment() {
                let mut arms = Vec::with_capacity(2);
                for a in 0..2u8 {
                    let arm = self.s.arm(a)?;
                    let fit = fit_boosting(&arm, &self.boost_cfg(STREAM_BOOST + 1 + a as u64))?;
                    arms.push(Arc::new(fit) as SharedFit);
                }
                let mu1 = arms.pop().unwrap();
                let mu0 = arms.pop().unwrap();
                Ok(Arc::new(ArmFit::new(mu0, mu1, self.s)?) as SharedFit)
            } else {
                Ok(Arc::new(fit_boosting(self.s, &self.boost_cfg(STREAM_BOOST))?) as SharedFit)
            }
        })
    }

    fn treatment_sample(&self) -> Result<Sample> {
        let a = self.s.treatment()?;
        self.s.with_outcome(a.iter().map(|&v| v as f64).collect())
    }

    /// Logistic-boosting propensity, shared by the boosting and polynomial
    /// estimators.
    fn boosting_propensity(&self) -> Result<SharedFit> {
        cached(&self.boosting_propensity, || {
            let sa = self.treatment_sample()?;
            let cfg = BoostingConfig { objective: BoostingObjective::Logistic, ..self.boost_cfg(STREAM_BOOST + 5) };
            Ok(Arc::new(fit_boosting(&sa, &cfg)?) as SharedFit)
        })
    }

    fn kernel_cv(&self, s: &Sample, plan: &FoldPlan) -> Result<SharedFit> {
        let sel = fit_kernel_cv(s, KernelKind::Epanechnikov, &bandwidth_grid(s), plan, Exec::Sequential)?;
        Ok(Arc::new(sel.fit))
    }

    fn kernel(&self) -> Result<SharedFit> {
        cached(&self.kernel, || {
            if self.dgp.has_treatment() {
                let mut arms = Vec::with_capacity(2);
                for a in 0..2u8 {
                    let arm = self.s.arm(a)?;
                    arms.push(self.kernel_cv(&arm, &self.arm_plan(&arm, a as u64)?)?);
                }
                let mu1 = arms.pop().unwrap();
                let mu0 = arms.pop().unwrap();
                Ok(Arc::new(ArmFit::new(mu0, mu1, self.s)?) as SharedFit)
            } else {
                self.kernel_cv(self.s, &self.plan()?)
            }
        })
    }

    /// Kernel regression of the treatment on the covariate.
    fn kernel_propensity(&self) -> Result<SharedFit> {
        cached(&self.kernel_propensity, || {
            let sa = self.treatment_sample()?;
            self.kernel_cv(&sa, &self.plan()?)
        })
    }

    fn aux_for(&self, kernel: bool) -> Result<Aux> {
        if !self.dgp.has_treatment() {
            return Ok(Aux::none());
        }
        let g = if kernel { self.kernel_propensity()? } else { self.boosting_propensity()? };
        Ok(Aux::with_propensity(g))
    }

    fn series_kind(&self) -> SeriesKind {
        if self.summary.arity() == 2 {
            SeriesKind::TrigTensorGeneralized
        } else {
            SeriesKind::TrigComposed
        }
    }

    fn hal_at(&self, m: f64, tuning: Vec<(String, f64)>) -> Result<Outcome> {
        let fit = fit_hal_with(self.s, Loss::SquaredError, m, &*self.hal_basis()?, &HalConfig::default())?;
        let fit: SharedFit = Arc::new(fit);
        let r = plug_in(&self.summary, &fit, self.s, &Aux::none())?;
        Ok(Outcome::from_report(&r, tuning))
    }

    fn series_cv(&self, init: SharedFit, kernel: bool) -> Result<Outcome> {
        let plan = self.plan()?;
        let grid = default_k_grid(self.s.n());
        let sel = select_k_cv_with(init, self.series_kind(), &grid, self.s, self.summary.loss(), &plan, Exec::Sequential)?;
        let fit: SharedFit = Arc::new(sel.fit);
        let r = plug_in(&self.summary, &fit, self.s, &self.aux_for(kernel)?)?;
        Ok(Outcome::from_report(&r, vec![("K".into(), sel.k_star as f64)]))
    }

    pub(crate) fn run(&self, spec: EstimatorSpec) -> Result<Outcome> {
        let s = self.s;
        match spec {
            EstimatorSpec::HalCv => {
                let sel = self.hal_cv()?;
                self.hal_at(sel.selected_m, vec![("M".into(), sel.selected_m)])
            }
            EstimatorSpec::HalGcv | EstimatorSpec::HalGcvPlus => {
                let sel = self.hal_cv()?;
                let eps = if spec == EstimatorSpec::HalGcv { 0.0 } else { GCV_PLUS_EPSILON };
                // ||2 theta||_v = 2 ||theta||_v for the second moment
                let grad_bound = |ms: &[f64]| 2.0 * ms[0];
                let big = enlarge_m(&sel, &grad_bound, &[sel.m_n], eps, Relaxation::Multiplicative)?;
                self.hal_at(big.selected_m, vec![("M".into(), big.selected_m), ("M.cv".into(), sel.m_n)])
            }
            EstimatorSpec::HalOracle => {
                let m = self
                    .dgp
                    .oracle_bound()
                    .ok_or_else(|| Error::config("no oracle bound for this process"))?;
                self.hal_at(m, vec![("M".into(), m)])
            }
            EstimatorSpec::Poly => {
                let (fit, tuning): (SharedFit, Vec<(String, f64)>) = if self.dgp.has_treatment() {
                    let mut arms = Vec::with_capacity(2);
                    let mut tuning = Vec::with_capacity(2);
                    for a in 0..2u8 {
                        let arm = s.arm(a)?;
                        let plan = self.arm_plan(&arm, a as u64)?;
                        let sel = fit_poly_cv(&arm, DEFAULT_MAX_DEGREE, &plan, Exec::Sequential)?;
                        tuning.push((format!("degree{a}"), sel.selected as f64));
                        arms.push(Arc::new(sel.fit) as SharedFit);
                    }
                    let mu1 = arms.pop().unwrap();
                    let mu0 = arms.pop().unwrap();
                    (Arc::new(ArmFit::new(mu0, mu1, s)?), tuning)
                } else {
                    let sel = fit_poly_cv(s, DEFAULT_MAX_DEGREE, &self.plan()?, Exec::Sequential)?;
                    let degree = sel.selected as f64;
                    (Arc::new(sel.fit), vec![("degree".into(), degree)])
                };
                let r = plug_in(&self.summary, &fit, s, &self.aux_for(false)?)?;
                Ok(Outcome::from_report(&r, tuning))
            }
            EstimatorSpec::Xgb => {
                let r = plug_in(&self.summary, &self.boosting()?, s, &self.aux_for(false)?)?;
                Ok(Outcome::from_report(&r, Vec::new()))
            }
            EstimatorSpec::Xgb1Step => {
                let r = one_step(&self.summary, &self.boosting()?, s, &self.aux_for(false)?)?;
                Ok(Outcome::from_report(&r, Vec::new()))
            }
            EstimatorSpec::XgbTrig => self.series_cv(self.boosting()?, false),
            EstimatorSpec::XgbTrigK(k) => {
                let space = build_series_space(self.boosting()?, self.series_kind(), k, s)?;
                let fit: SharedFit = Arc::new(fit_series(&space, s, self.summary.loss())?);
                let r = plug_in(&self.summary, &fit, s, &self.aux_for(false)?)?;
                Ok(Outcome::from_report(&r, vec![("K".into(), k as f64)]))
            }
            EstimatorSpec::KernelTrig => self.series_cv(self.kernel()?, true),
            EstimatorSpec::Oracle => Ok(Outcome {
                psi_hat: self.targets.psi,
                se: 0.0,
                ci_lo: self.targets.psi,
                ci_hi: self.targets.psi,
                degenerate: true,
                tuning: Vec::new(),
            }),
        }
    }
}
