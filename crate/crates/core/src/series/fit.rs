use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::{predict_outputs, ranges_of, FittedFunction};
use crate::loss::{empirical_risk, expit, softplus, Loss};

use super::space::SeriesSpace;

/// Least-squares or logistic fit within a [`SeriesSpace`]; one coefficient
/// vector per output component.
#[derive(Clone)]
pub struct SeriesFit {
    pub(crate) space: Arc<SeriesSpace>,
    pub(crate) coefficients: Vec<Vec<f64>>,
    pub(crate) loss: Loss,
    pub(crate) risk: f64,
    pub(crate) range: Vec<(f64, f64)>,
}

impl fmt::Debug for SeriesFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeriesFit")
            .field("space", &self.space)
            .field("coefficients", &self.coefficients)
            .field("risk", &self.risk)
            .finish()
    }
}

impl SeriesFit {
    pub fn space(&self) -> &SeriesSpace {
        &self.space
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    /// Coefficients of output component `comp`.
    pub fn coefficients(&self, comp: usize) -> &[f64] {
        &self.coefficients[comp]
    }

    /// Empirical risk on the training sample.
    pub fn risk(&self) -> f64 {
        self.risk
    }

    /// Builds a fit from explicit coefficients, e.g. when reading a file.
    pub fn from_coefficients(space: SeriesSpace, coefficients: Vec<Vec<f64>>, loss: Loss, s: &Sample) -> Result<SeriesFit> {
        if coefficients.len() != space.arity() || coefficients.iter().any(|c| c.len() != space.n_columns()) {
            return Err(Error::config(format!(
                "expected {} coefficient vector(s) of length {}",
                space.arity(),
                space.n_columns()
            )));
        }
        let mut fit = SeriesFit {
            space: Arc::new(space),
            coefficients,
            loss,
            risk: f64::NAN,
            range: Vec::new(),
        };
        fit.range = ranges_of(&predict_outputs(&fit, s));
        if loss.arity() == fit.arity() && (loss != Loss::ArmSquaredError || s.has_treatment()) {
            fit.risk = empirical_risk(&fit, loss, s)?;
        }
        Ok(fit)
    }
}

impl FittedFunction for SeriesFit {
    fn arity(&self) -> usize {
        self.coefficients.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let init = self.space.init.eval(x);
        let mut cols = Vec::with_capacity(self.space.n_columns());
        for (c, coef) in self.coefficients.iter().enumerate() {
            if c == 0 || self.space.kind != super::SeriesKind::TrigTensorGeneralized {
                self.space.columns_from_init(c, x, &init, &mut cols);
            }
            out[c] = cols.iter().zip(coef).map(|(a, b)| a * b).sum();
        }
    }

    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }

    fn label(&self) -> String {
        format!("{}(K={})[{}]", self.space.kind.name(), self.space.k, self.space.init.label())
    }
}

/// Ridge jitter relative to the mean Gram diagonal.
pub(crate) const JITTER: f64 = 1e-10;

/// Nested least-squares solver: a Householder QR of the design at the
/// largest width serves every leading-column prefix. Prefixes whose `R` is
/// numerically rank deficient fall back to the jittered normal equations.
pub(crate) struct NestedLs<'a> {
    design: &'a [f64],
    z: &'a [f64],
    p_max: usize,
    r: DMatrix<f64>,
    qtz: DVector<f64>,
    gram: Option<(DMatrix<f64>, DVector<f64>)>,
}

/// Relative size of an `R` diagonal entry below which the prefix is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-12;

impl<'a> NestedLs<'a> {
    pub(crate) fn new(design: &'a [f64], p_max: usize, z: &'a [f64]) -> Self {
        let n = z.len();
        let (r, qtz) = if p_max == 0 || n == 0 {
            (DMatrix::zeros(0, 0), DVector::zeros(0))
        } else {
            let qr = DMatrix::from_row_slice(n, p_max, design).qr();
            let mut qtz = DVector::from_column_slice(z);
            qr.q_tr_mul(&mut qtz);
            let k = p_max.min(n);
            (qr.r(), qtz.rows(0, k).into_owned())
        };
        NestedLs { design, z, p_max, r, qtz, gram: None }
    }

    /// Coefficients using the first `p` columns.
    pub(crate) fn solve(&mut self, p: usize) -> Result<Vec<f64>> {
        if p == 0 {
            return Ok(Vec::new());
        }
        if p <= self.r.nrows() {
            let diag: Vec<f64> = (0..p).map(|i| self.r[(i, i)].abs()).collect();
            let max = diag.iter().copied().fold(0.0, f64::max);
            if diag.iter().all(|&d| d > RANK_TOL * max) {
                let rp = self.r.view((0, 0), (p, p));
                let mut beta = self.qtz.rows(0, p).into_owned();
                if rp.solve_upper_triangular_mut(&mut beta) && beta.iter().all(|v| v.is_finite()) {
                    return Ok(beta.iter().copied().collect());
                }
            }
        }
        if self.gram.is_none() {
            self.gram = Some(gram(self.design, self.p_max, self.z));
        }
        let (g, b) = self.gram.as_ref().unwrap();
        solve_gram(g.view((0, 0), (p, p)).into_owned(), b.rows(0, p).into_owned())
    }
}

/// Least-squares coefficients from a row-major design.
pub(crate) fn least_squares(design: &[f64], p: usize, z: &[f64]) -> Result<Vec<f64>> {
    NestedLs::new(design, p, z).solve(p)
}

pub(crate) fn gram(design: &[f64], p: usize, z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (row, &zi) in design.chunks_exact(p).zip(z) {
        for j in 0..p {
            let rj = row[j];
            b[j] += rj * zi;
            for k in 0..=j {
                g[(j, k)] += rj * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            g[(k, j)] = g[(j, k)];
        }
    }
    (g, b)
}

pub(crate) fn solve_gram(mut g: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    let p = g.nrows();
    if p == 0 {
        return Ok(Vec::new());
    }
    let jitter = JITTER * g.trace() / p as f64;
    for j in 0..p {
        g[(j, j)] += jitter;
    }
    let gc = g.clone();
    match g.cholesky() {
        Some(ch) => {
            let beta = ch.solve(&b);
            if beta.iter().all(|v| v.is_finite()) {
                return Ok(beta.iter().copied().collect());
            }
            Err(singular(&gc))
        }
        None => Err(singular(&gc)),
    }
}

fn singular(g: &DMatrix<f64>) -> Error {
    let sv = g.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    Error::numerical(format!(
        "series Gram matrix is singular after jitter (condition estimate {:.3e})",
        if min > 0.0 { max / min } else { f64::INFINITY }
    ))
}

/// Damped Newton for the logistic loss on the logit scale.
pub(crate) fn logistic_newton(design: &[f64], p: usize, z: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    let risk = |beta: &[f64]| -> f64 {
        design
            .chunks_exact(p)
            .zip(z)
            .map(|(r, &zi)| {
                let t: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
                -zi * t + softplus(t)
            })
            .sum::<f64>()
            / n as f64
    };
    let mut beta = vec![0.0; p];
    let mut current = risk(&beta);
    for _ in 0..200 {
        let mut g = DMatrix::<f64>::zeros(p, p);
        let mut grad = DVector::<f64>::zeros(p);
        for (r, &zi) in design.chunks_exact(p).zip(z) {
            let t: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = expit(t);
            let w = (mu * (1.0 - mu)).max(1e-12);
            for j in 0..p {
                grad[j] += (mu - zi) * r[j];
                for k in 0..=j {
                    g[(j, k)] += w * r[j] * r[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                g[(k, j)] = g[(j, k)];
            }
        }
        grad /= n as f64;
        g /= n as f64;
        let step = solve_gram(g, grad.clone())?;
        let decrement: f64 = step.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
        if decrement.abs() < 1e-24 {
            break;
        }
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-10 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let r = risk(&cand);
            // Near the optimum the risk change is below rounding; the full
            // Newton step is then taken on the quadratic model alone.
            let tiny = decrement < 1e-12 && t == 1.0 && r <= current + 1e-14 * current.abs();
            if tiny || r <= current - 1e-4 * t * decrement {
                beta = cand;
                current = r;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("logistic series fit diverged"));
    }
    Ok(beta)
}

/// Rows used by output component `comp` under `loss`.
pub(crate) fn component_rows(loss: Loss, s: &Sample, comp: usize) -> Result<Vec<usize>> {
    Ok(match loss {
        Loss::ArmSquaredError => {
            let a = s.treatment()?;
            (0..s.n()).filter(|&i| a[i] as usize == comp).collect()
        }
        _ => (0..s.n()).collect(),
    })
}

fn check_loss(space: &SeriesSpace, loss: Loss, s: &Sample) -> Result<()> {
    if space.arity() != loss.arity() {
        return Err(Error::config(format!(
            "{} loss needs an initial fit with {} output(s), got {}",
            loss.name(),
            loss.arity(),
            space.arity()
        )));
    }
    if loss == Loss::Logistic && s.z().iter().any(|&z| z != 0.0 && z != 1.0) {
        return Err(Error::data("logistic loss needs a binary outcome"));
    }
    Ok(())
}

/// Minimizes the empirical risk over the span.
pub fn fit_series(space: &SeriesSpace, s: &Sample, loss: Loss) -> Result<SeriesFit> {
    check_loss(space, loss, s)?;
    let p = space.n_columns();
    let mut coefficients = Vec::with_capacity(space.arity());
    for comp in 0..space.arity() {
        let rows = component_rows(loss, s, comp)?;
        if rows.is_empty() {
            return Err(Error::data(format!("output component {comp} has no training rows")));
        }
        if p > rows.len() {
            return Err(Error::config(format!(
                "series span has {p} columns but only {} training rows",
                rows.len()
            )));
        }
        if 2 * p > rows.len() {
            log::warn!("series span has {p} columns for {} rows; the fit may be unstable", rows.len());
        }
        let design = space.design(comp, s, &rows);
        let z: Vec<f64> = rows.iter().map(|&i| s.z()[i]).collect();
        let beta = match loss {
            Loss::Logistic => logistic_newton(&design, p, &z)?,
            _ => least_squares(&design, p, &z)?,
        };
        coefficients.push(beta);
    }
    SeriesFit::from_coefficients(space.clone(), coefficients, loss, s)
}
