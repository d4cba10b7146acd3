//! Summary functionals, their gradients and influence functions, and the
//! plug-in and one-step estimators with Wald intervals.

mod estimate;
mod report;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fitted::SharedFit;
use crate::loss::Loss;

pub use estimate::{gradient_fit, influence_function, one_step, plug_in, plug_in_value, InfluenceFunction};
pub use report::{wald_ci, EstimateReport, EstimatorKind, WaldInterval, Z_975};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ScoreFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Default propensity truncation level.
pub const DEFAULT_TRUNCATION: f64 = 0.01;

/// A scalar summary `Psi(theta)` of a regression function.
#[derive(Clone)]
pub enum Summary {
    /// `P theta^kappa`.
    MomentKappa(u32),
    /// `P f(theta)` with `f` and its derivative supplied together.
    SmoothMoment { name: String, f: ScalarFn, df: ScalarFn },
    /// `P mu_1`, where `mu_1(x) = E[Z | A = 1, X = x]`.
    MeanCounterfactual,
    /// `Var(mu_1(X) - mu_0(X))` for the arm pair `theta = (mu_0, mu_1)`.
    HteVariance,
    /// `E[d theta / d x_j] = -E[theta(X) s_j(X)]` with the density score
    /// `s_j = (d p / d x_j) / p` supplied through [`Aux`].
    AverageDerivative { coordinate: usize },
}

impl fmt::Debug for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Extra fitted quantities a summary's influence function needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxRequirement {
    None,
    Propensity,
    DensityScore,
}

/// Auxiliary fits: a propensity score `g(x) = P(A = 1 | X = x)` reported on
/// the probability scale, or a known density score.
#[derive(Clone)]
pub struct Aux {
    pub propensity: Option<SharedFit>,
    pub density_score: Option<ScoreFn>,
    /// Propensities are clipped to `[truncation, 1 - truncation]`.
    pub truncation: f64,
}

impl Default for Aux {
    fn default() -> Self {
        Aux { propensity: None, density_score: None, truncation: DEFAULT_TRUNCATION }
    }
}

impl fmt::Debug for Aux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Aux")
            .field("propensity", &self.propensity.as_ref().map(|p| p.label()))
            .field("density_score", &self.density_score.is_some())
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl Aux {
    pub fn none() -> Self {
        Aux::default()
    }

    pub fn with_propensity(g: SharedFit) -> Self {
        Aux { propensity: Some(g), ..Aux::default() }
    }

    pub fn with_density_score(score: ScoreFn) -> Self {
        Aux { density_score: Some(score), ..Aux::default() }
    }
}

impl Summary {
    /// `P f(theta)` from a pair of closures.
    pub fn smooth<F, D>(name: &str, f: F, df: D) -> Summary
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Summary::SmoothMoment { name: name.to_string(), f: Arc::new(f), df: Arc::new(df) }
    }

    pub fn name(&self) -> String {
        match self {
            Summary::MomentKappa(k) => format!("moment{k}"),
            Summary::SmoothMoment { name, .. } => format!("smooth:{name}"),
            Summary::MeanCounterfactual => "mean_counterfactual".into(),
            Summary::HteVariance => "hte_variance".into(),
            Summary::AverageDerivative { coordinate } => format!("average_derivative{}", coordinate + 1),
        }
    }

    /// Parses `moment<k>`, `mean_counterfactual`, `hte_variance`.
    pub fn from_name(s: &str) -> Result<Summary> {
        if let Some(k) = s.strip_prefix("moment") {
            let k: u32 = k
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::config(format!("bad moment order in `{s}`")))?;
            return Ok(Summary::MomentKappa(k));
        }
        match s {
            "mean_counterfactual" => Ok(Summary::MeanCounterfactual),
            "hte_variance" => Ok(Summary::HteVariance),
            other => Err(Error::config(format!(
                "unknown summary `{other}` (expected moment<k>, mean_counterfactual, hte_variance)"
            ))),
        }
    }

    /// Output dimension the fit must have.
    pub fn arity(&self) -> usize {
        match self {
            Summary::HteVariance => 2,
            _ => 1,
        }
    }

    /// Loss under which the regression function is the risk minimizer.
    pub fn loss(&self) -> Loss {
        match self {
            Summary::HteVariance => Loss::ArmSquaredError,
            _ => Loss::SquaredError,
        }
    }

    pub fn requires(&self) -> AuxRequirement {
        match self {
            Summary::MeanCounterfactual | Summary::HteVariance => AuxRequirement::Propensity,
            Summary::AverageDerivative { .. } => AuxRequirement::DensityScore,
            _ => AuxRequirement::None,
        }
    }

    pub fn needs_treatment(&self) -> bool {
        matches!(self, Summary::MeanCounterfactual | Summary::HteVariance)
    }

    /// The pointwise map `t -> f(t)` of a generalized moment, if this is one.
    pub(crate) fn moment_fn(&self, t: f64) -> Option<(f64, f64)> {
        match self {
            Summary::MomentKappa(k) => {
                let k = *k as i32;
                Some((t.powi(k), k as f64 * t.powi(k - 1)))
            }
            Summary::SmoothMoment { f, df, .. } => Some((f(t), df(t))),
            _ => None,
        }
    }
}
