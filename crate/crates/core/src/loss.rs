//! Loss functions and empirical risk.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::FittedFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `(z - theta(x))^2`
    SquaredError,
    /// `-z theta(x) + log(1 + exp(theta(x)))`, theta on the logit scale.
    Logistic,
    /// `a (z - mu_1(x))^2 + (1 - a)(z - mu_0(x))^2` with `theta = (mu_0, mu_1)`.
    ArmSquaredError,
}

impl Loss {
    /// Output dimension the loss expects from a fit.
    pub fn arity(self) -> usize {
        match self {
            Loss::SquaredError | Loss::Logistic => 1,
            Loss::ArmSquaredError => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::SquaredError => "squared_error",
            Loss::Logistic => "logistic",
            Loss::ArmSquaredError => "arm_squared_error",
        }
    }

    pub fn from_name(s: &str) -> Result<Loss> {
        match s {
            "squared_error" | "squared" => Ok(Loss::SquaredError),
            "logistic" => Ok(Loss::Logistic),
            "arm_squared_error" | "arm" => Ok(Loss::ArmSquaredError),
            other => Err(Error::config(format!(
                "unknown loss `{other}` (expected squared_error, logistic, arm_squared_error)"
            ))),
        }
    }

    /// Loss of prediction(s) `pred` at observation `(z, a)`.
    #[inline]
    pub fn evaluate(self, pred: &[f64], z: f64, a: Option<u8>) -> f64 {
        match self {
            Loss::SquaredError => {
                let r = z - pred[0];
                r * r
            }
            Loss::Logistic => {
                let t = pred[0];
                -z * t + softplus(t)
            }
            Loss::ArmSquaredError => {
                let arm = a.expect("arm loss requires a treatment value") as usize;
                let r = z - pred[arm];
                r * r
            }
        }
    }

    pub(crate) fn check(self, f: &dyn FittedFunction, s: &Sample) -> Result<()> {
        if f.arity() != self.arity() {
            return Err(Error::config(format!(
                "{} loss needs a fit with {} output(s), got {}",
                self.name(),
                self.arity(),
                f.arity()
            )));
        }
        if self == Loss::ArmSquaredError {
            s.treatment()?;
        }
        Ok(())
    }
}

/// Numerically stable `log(1 + exp(t))`.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `n^{-1} sum_i loss(f)(V_i)`.
pub fn empirical_risk(f: &dyn FittedFunction, loss: Loss, s: &Sample) -> Result<f64> {
    loss.check(f, s)?;
    let mut buf = vec![0.0; f.arity()];
    let a = s.a();
    let mut total = 0.0;
    for (i, row) in s.rows().enumerate() {
        f.eval_into(row, &mut buf);
        total += loss.evaluate(&buf, s.z()[i], a.map(|a| a[i]));
    }
    Ok(total / s.n() as f64)
}
