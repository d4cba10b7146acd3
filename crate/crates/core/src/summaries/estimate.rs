use std::sync::Arc;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::{predict_outputs, FnFit, SharedFit};

use super::report::{wald_ci, EstimateReport, EstimatorKind};
use super::{Aux, AuxRequirement, Summary};

fn check(summary: &Summary, fit: &SharedFit, s: &Sample, aux: &Aux) -> Result<()> {
    let ok = match summary {
        Summary::MeanCounterfactual => fit.arity() == 1 || fit.arity() == 2,
        _ => fit.arity() == summary.arity(),
    };
    if !ok {
        return Err(Error::config(format!(
            "summary {} needs a fit with {} output(s), got {}",
            summary.name(),
            summary.arity(),
            fit.arity()
        )));
    }
    if summary.needs_treatment() {
        s.treatment()?;
    }
    match summary.requires() {
        AuxRequirement::Propensity if aux.propensity.is_none() => Err(Error::config(format!(
            "summary {} needs a propensity score fit g(x) = P(A = 1 | X = x)",
            summary.name()
        ))),
        AuxRequirement::DensityScore if aux.density_score.is_none() => Err(Error::config(format!(
            "summary {} needs the density score of the covariates",
            summary.name()
        ))),
        _ => {
            if let Some(g) = &aux.propensity {
                if g.arity() != 1 {
                    return Err(Error::config("propensity fit must be scalar-valued"));
                }
            }
            if !(0.0..0.5).contains(&aux.truncation) {
                return Err(Error::config("propensity truncation must lie in [0, 0.5)"));
            }
            if let Summary::AverageDerivative { coordinate } = summary {
                if *coordinate >= s.d() {
                    return Err(Error::config("average derivative coordinate exceeds the covariate dimension"));
                }
            }
            Ok(())
        }
    }
}

/// Treated-arm regression value: the fit itself, or output 1 of an arm pair.
#[inline]
fn mu1(theta: &[f64]) -> f64 {
    theta[theta.len() - 1]
}

fn truncate(g: f64, delta: f64) -> (f64, bool) {
    if g < delta {
        (delta, true)
    } else if g > 1.0 - delta {
        (1.0 - delta, true)
    } else {
        (g, false)
    }
}

/// Plug-in value `Psi(theta)` under the empirical covariate distribution of `s`.
pub fn plug_in_value(summary: &Summary, fit: &SharedFit, s: &Sample, aux: &Aux) -> Result<f64> {
    if let Summary::AverageDerivative { .. } = summary {
        if aux.density_score.is_none() {
            return Err(Error::config("average derivative needs the density score of the covariates"));
        }
    }
    let cols = predict_outputs(fit.as_ref(), s);
    let n = s.n() as f64;
    Ok(match summary {
        Summary::MomentKappa(_) | Summary::SmoothMoment { .. } => {
            cols[0].iter().map(|&t| summary.moment_fn(t).unwrap().0).sum::<f64>() / n
        }
        Summary::MeanCounterfactual => cols[cols.len() - 1].iter().sum::<f64>() / n,
        Summary::HteVariance => {
            let tau: Vec<f64> = cols[1].iter().zip(&cols[0]).map(|(a, b)| a - b).collect();
            let m = tau.iter().sum::<f64>() / n;
            tau.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / n
        }
        Summary::AverageDerivative { .. } => {
            let score = aux.density_score.as_ref().unwrap();
            -s.rows().zip(&cols[0]).map(|(x, t)| t * score(x)).sum::<f64>() / n
        }
    })
}

/// Estimated influence function `v -> loss part(v) + marginal part(x) - psi`,
/// with sample-dependent centering constants frozen at construction.
#[derive(Clone)]
pub struct InfluenceFunction {
    summary: Summary,
    fit: SharedFit,
    aux: Aux,
    tau_center: f64,
    psi: f64,
}

impl std::fmt::Debug for InfluenceFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InfluenceFunction")
            .field("summary", &self.summary)
            .field("fit", &self.fit.label())
            .field("psi", &self.psi)
            .finish()
    }
}

impl InfluenceFunction {
    /// Centering value `psi`.
    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// Same function centered at a different estimate.
    pub fn recentered(&self, psi: f64) -> InfluenceFunction {
        InfluenceFunction { psi, ..self.clone() }
    }

    /// `(loss part, marginal part, propensity truncated?)` at one observation.
    pub fn parts(&self, x: &[f64], z: f64, a: Option<u8>) -> (f64, f64, bool) {
        let theta = self.fit.eval(x);
        self.parts_at(&theta, x, z, a)
    }

    fn propensity(&self, x: &[f64]) -> (f64, bool) {
        let g = self.aux.propensity.as_ref().expect("checked at construction").eval1(x);
        truncate(g, self.aux.truncation)
    }

    fn parts_at(&self, theta: &[f64], x: &[f64], z: f64, a: Option<u8>) -> (f64, f64, bool) {
        match &self.summary {
            Summary::MomentKappa(_) | Summary::SmoothMoment { .. } => {
                let (f, df) = self.summary.moment_fn(theta[0]).unwrap();
                (df * (z - theta[0]), f, false)
            }
            Summary::MeanCounterfactual => {
                let (g, clipped) = self.propensity(x);
                let m1 = mu1(theta);
                let a = a.expect("treatment checked") as f64;
                (a / g * (z - m1), m1, clipped)
            }
            Summary::HteVariance => {
                let (g, clipped) = self.propensity(x);
                let c = theta[1] - theta[0] - self.tau_center;
                let loss = if a.expect("treatment checked") == 1 {
                    2.0 * c / g * (z - theta[1])
                } else {
                    -2.0 * c / (1.0 - g) * (z - theta[0])
                };
                (loss, c * c, clipped)
            }
            Summary::AverageDerivative { .. } => {
                let sc = self.aux.density_score.as_ref().expect("checked")(x);
                (-sc * (z - theta[0]), -sc * theta[0], false)
            }
        }
    }

    pub fn eval(&self, x: &[f64], z: f64, a: Option<u8>) -> f64 {
        let (l, m, _) = self.parts(x, z, a);
        l + m - self.psi
    }
}

/// Influence function of the plug-in estimator at `fit`, centered at the
/// plug-in value on `s`.
pub fn influence_function(summary: &Summary, fit: &SharedFit, aux: &Aux, s: &Sample) -> Result<InfluenceFunction> {
    check(summary, fit, s, aux)?;
    let tau_center = if let Summary::HteVariance = summary {
        let cols = predict_outputs(fit.as_ref(), s);
        cols[1].iter().zip(&cols[0]).map(|(a, b)| a - b).sum::<f64>() / s.n() as f64
    } else {
        0.0
    };
    let psi = plug_in_value(summary, fit, s, aux)?;
    Ok(InfluenceFunction { summary: summary.clone(), fit: fit.clone(), aux: aux.clone(), tau_center, psi })
}

struct Evaluated {
    loss: Vec<f64>,
    marginal: Vec<f64>,
    truncated: usize,
    inf: InfluenceFunction,
}

fn evaluate(summary: &Summary, fit: &SharedFit, s: &Sample, aux: &Aux) -> Result<Evaluated> {
    let inf = influence_function(summary, fit, aux, s)?;
    let cols = predict_outputs(fit.as_ref(), s);
    let q = fit.arity();
    let mut theta = vec![0.0; q];
    let a = s.a();
    let mut loss = Vec::with_capacity(s.n());
    let mut marginal = Vec::with_capacity(s.n());
    let mut truncated = 0;
    for (i, x) in s.rows().enumerate() {
        for (t, c) in theta.iter_mut().zip(&cols) {
            *t = c[i];
        }
        let (l, m, clipped) = inf.parts_at(&theta, x, s.z()[i], a.map(|a| a[i]));
        loss.push(l);
        marginal.push(m);
        truncated += clipped as usize;
    }
    if truncated > 0 {
        log::warn!(
            "{truncated} of {} propensity values clipped to [{}, {}]",
            s.n(),
            aux.truncation,
            1.0 - aux.truncation
        );
    }
    if loss.iter().chain(&marginal).any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite influence function values for {}", summary.name())));
    }
    Ok(Evaluated { loss, marginal, truncated, inf })
}

fn report(kind: EstimatorKind, summary: &Summary, fit: &SharedFit, psi: f64, ev: Evaluated) -> Result<EstimateReport> {
    let if_values: Vec<f64> = ev.loss.iter().zip(&ev.marginal).map(|(l, m)| l + m - psi).collect();
    let n = if_values.len();
    let if_mean = if_values.iter().sum::<f64>() / n as f64;
    let ci = wald_ci(psi, &if_values)?;
    Ok(EstimateReport {
        estimator: kind,
        summary: summary.name(),
        n,
        psi_hat: psi,
        if_values,
        if_mean,
        ci,
        truncated: ev.truncated,
        provenance: fit.label(),
        seed: None,
    })
}

/// `Psi(fit)` with influence-function based standard error.
pub fn plug_in(summary: &Summary, fit: &SharedFit, s: &Sample, aux: &Aux) -> Result<EstimateReport> {
    let ev = evaluate(summary, fit, s, aux)?;
    let psi = ev.inf.psi;
    report(EstimatorKind::PlugIn, summary, fit, psi, ev)
}

/// Plug-in plus the empirical mean of the loss part of the influence
/// function; the full estimated influence function then has mean zero.
pub fn one_step(summary: &Summary, fit: &SharedFit, s: &Sample, aux: &Aux) -> Result<EstimateReport> {
    let ev = evaluate(summary, fit, s, aux)?;
    let n = s.n() as f64;
    let psi = ev.marginal.iter().sum::<f64>() / n + ev.loss.iter().sum::<f64>() / n;
    report(EstimatorKind::OneStep, summary, fit, psi, ev)
}

/// `Psi_dot` at `fit` as a fitted function of `x` (arity matches the fit),
/// e.g. for building a targeted series span.
pub fn gradient_fit(summary: &Summary, fit: &SharedFit, aux: &Aux, s: &Sample) -> Result<SharedFit> {
    let inf = influence_function(summary, fit, aux, s)?;
    let q = fit.arity();
    let g = Arc::new(FnFit::new(
        format!("grad[{}]", summary.name()),
        q,
        move |x: &[f64], out: &mut [f64]| {
            let theta = inf.fit.eval(x);
            match &inf.summary {
                Summary::MomentKappa(_) | Summary::SmoothMoment { .. } => {
                    out[0] = inf.summary.moment_fn(theta[0]).unwrap().1;
                }
                Summary::MeanCounterfactual => {
                    out.fill(0.0);
                    out[q - 1] = 1.0 / inf.propensity(x).0;
                }
                Summary::HteVariance => {
                    let g = inf.propensity(x).0;
                    let c = theta[1] - theta[0] - inf.tau_center;
                    out[0] = -2.0 * c / (1.0 - g);
                    out[1] = 2.0 * c / g;
                }
                Summary::AverageDerivative { .. } => {
                    out[0] = -inf.aux.density_score.as_ref().unwrap()(x);
                }
            }
        },
        s,
    ));
    Ok(g)
}
