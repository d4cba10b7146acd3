//! Evaluable fitted regression objects.

use std::fmt;
use std::sync::Arc;

use crate::data::{min_max, Sample};
use crate::error::{Error, Result};

/// A deterministic, possibly vector-valued fitted function `x -> R^q`.
///
/// For treatment-arm problems the output order is `(mu_0, mu_1)`.
pub trait FittedFunction: Send + Sync + fmt::Debug {
    /// Output dimension `q`.
    fn arity(&self) -> usize;

    /// Writes the `arity()` outputs at covariate row `x` into `out`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Per-output `(min, max)` of the predictions over the training rows.
    fn fitted_range(&self) -> &[(f64, f64)];

    /// Short label used in reports and provenance strings.
    fn label(&self) -> String {
        "fit".to_string()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.arity()];
        self.eval_into(x, &mut out);
        out
    }

    /// Scalar evaluation; uses the first output.
    fn eval1(&self, x: &[f64]) -> f64 {
        if self.arity() == 1 {
            let mut out = [0.0];
            self.eval_into(x, &mut out);
            out[0]
        } else {
            self.eval(x)[0]
        }
    }
}

pub type SharedFit = Arc<dyn FittedFunction>;

/// Predictions for every row of `s`, one vector per output.
pub fn predict_outputs(f: &dyn FittedFunction, s: &Sample) -> Vec<Vec<f64>> {
    let q = f.arity();
    let mut cols = vec![Vec::with_capacity(s.n()); q];
    let mut buf = vec![0.0; q];
    for row in s.rows() {
        f.eval_into(row, &mut buf);
        for (c, &v) in cols.iter_mut().zip(&buf) {
            c.push(v);
        }
    }
    cols
}

/// Predictions of a scalar fit at every row of `s`.
pub fn predict(f: &dyn FittedFunction, s: &Sample) -> Vec<f64> {
    if f.arity() == 1 {
        let mut out = [0.0];
        s.rows()
            .map(|r| {
                f.eval_into(r, &mut out);
                out[0]
            })
            .collect()
    } else {
        predict_outputs(f, s).swap_remove(0)
    }
}

pub(crate) fn ranges_of(cols: &[Vec<f64>]) -> Vec<(f64, f64)> {
    cols.iter().map(|c| min_max(c)).collect()
}

/// A constant function `x -> c`.
#[derive(Debug, Clone)]
pub struct ConstantFit {
    values: Vec<f64>,
    range: Vec<(f64, f64)>,
}

impl ConstantFit {
    pub fn new(c: f64) -> Self {
        Self::vector(vec![c])
    }

    pub fn vector(values: Vec<f64>) -> Self {
        let range = values.iter().map(|&v| (v, v)).collect();
        ConstantFit { values, range }
    }

    /// Sample mean of the outcome.
    pub fn mean_of(s: &Sample) -> Self {
        ConstantFit::new(s.z().iter().sum::<f64>() / s.n() as f64)
    }
}

impl FittedFunction for ConstantFit {
    fn arity(&self) -> usize {
        self.values.len()
    }
    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.values);
    }
    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }
    fn label(&self) -> String {
        "constant".into()
    }
}

/// Stacks two scalar fits into the arity-2 function `(mu_0, mu_1)`.
#[derive(Debug, Clone)]
pub struct ArmFit {
    arms: [SharedFit; 2],
    range: Vec<(f64, f64)>,
}

impl ArmFit {
    /// `ranges` are the training prediction ranges of each arm over the
    /// full sample (not just its own arm).
    pub fn new(mu0: SharedFit, mu1: SharedFit, s: &Sample) -> Result<Self> {
        if mu0.arity() != 1 || mu1.arity() != 1 {
            return Err(Error::config("arm fits must be scalar-valued"));
        }
        let r0 = min_max(&predict(mu0.as_ref(), s));
        let r1 = min_max(&predict(mu1.as_ref(), s));
        Ok(ArmFit { arms: [mu0, mu1], range: vec![r0, r1] })
    }

    /// Rebuilds a stored pair with known per-arm ranges.
    pub fn from_parts(mu0: SharedFit, mu1: SharedFit, ranges: [(f64, f64); 2]) -> Result<Self> {
        if mu0.arity() != 1 || mu1.arity() != 1 {
            return Err(Error::config("arm fits must be scalar-valued"));
        }
        Ok(ArmFit { arms: [mu0, mu1], range: ranges.to_vec() })
    }

    pub fn arm(&self, a: usize) -> &SharedFit {
        &self.arms[a]
    }
}

impl FittedFunction for ArmFit {
    fn arity(&self) -> usize {
        2
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.arms[0].eval1(x);
        out[1] = self.arms[1].eval1(x);
    }
    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }
    fn label(&self) -> String {
        format!("arms({},{})", self.arms[0].label(), self.arms[1].label())
    }
}

/// Wraps a closure, e.g. a known true regression function.
pub struct FnFit<F> {
    f: F,
    arity: usize,
    range: Vec<(f64, f64)>,
    name: String,
}

impl<F> FnFit<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(name: impl Into<String>, arity: usize, f: F, s: &Sample) -> Self {
        let mut fit = FnFit { f, arity, range: vec![(0.0, 0.0); arity], name: name.into() };
        let cols = predict_outputs(&fit, s);
        fit.range = ranges_of(&cols);
        fit
    }
}

impl<F> fmt::Debug for FnFit<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFit").field("name", &self.name).field("arity", &self.arity).finish()
    }
}

impl<F> FittedFunction for FnFit<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }
    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Scalar closure fit: `x -> f(x)`.
pub fn scalar_fn<G>(name: &str, g: G, s: &Sample) -> FnFit<impl Fn(&[f64], &mut [f64]) + Send + Sync>
where
    G: Fn(&[f64]) -> f64 + Send + Sync,
{
    FnFit::new(name, 1, move |x: &[f64], out: &mut [f64]| out[0] = g(x), s)
}
