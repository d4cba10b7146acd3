//! Polynomial least squares in a Legendre basis with CV-selected degree.

use nalgebra::{DMatrix, DVector};

use crate::cv::{cv_argmin, cv_risk_with};
use crate::data::{min_max, Sample};
use crate::error::{Error, Result};
use crate::fitted::{predict, FittedFunction};
use crate::folds::FoldPlan;
use crate::loss::Loss;
use crate::par::Exec;

/// Largest degree tried by default.
pub const DEFAULT_MAX_DEGREE: usize = 20;

/// Legendre polynomials `P_0..P_p` at `t`.
pub fn legendre_all(t: f64, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p + 1);
    out.push(1.0);
    if p >= 1 {
        out.push(t);
    }
    for k in 1..p {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

#[derive(Debug, Clone)]
pub struct PolyFit {
    degree: usize,
    lo: f64,
    hi: f64,
    coef: Vec<f64>,
    range: Vec<(f64, f64)>,
}

impl PolyFit {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficients on `P_k(t)` with `t` the covariate mapped onto `[-1, 1]`.
    pub fn legendre_coefficients(&self) -> &[f64] {
        &self.coef
    }

    fn to_t(&self, x: f64) -> f64 {
        if self.hi > self.lo {
            (2.0 * x - (self.lo + self.hi)) / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    /// Coefficients of the same polynomial in powers of the original
    /// covariate, lowest power first.
    pub fn monomial_coefficients(&self) -> Vec<f64> {
        let p = self.degree;
        // power-series coefficients of each P_k in t
        let mut pk: Vec<Vec<f64>> = vec![vec![1.0]];
        if p >= 1 {
            pk.push(vec![0.0, 1.0]);
        }
        for k in 1..p {
            let kf = k as f64;
            let mut next = vec![0.0; k + 2];
            for (j, &c) in pk[k].iter().enumerate() {
                next[j + 1] += (2.0 * kf + 1.0) * c / (kf + 1.0);
            }
            for (j, &c) in pk[k - 1].iter().enumerate() {
                next[j] -= kf * c / (kf + 1.0);
            }
            pk.push(next);
        }
        let mut in_t = vec![0.0; p + 1];
        for (k, c) in self.coef.iter().enumerate() {
            for (j, &v) in pk[k].iter().enumerate() {
                in_t[j] += c * v;
            }
        }
        if !(self.hi > self.lo) {
            let mut out = vec![0.0; p + 1];
            out[0] = in_t[0];
            return out;
        }
        // substitute t = a x + b
        let a = 2.0 / (self.hi - self.lo);
        let b = -(self.lo + self.hi) / (self.hi - self.lo);
        let mut out = vec![0.0; p + 1];
        for (k, &c) in in_t.iter().enumerate() {
            let mut binom = 1.0;
            for j in 0..=k {
                // C(k, j) a^j b^(k-j)
                out[j] += c * binom * a.powi(j as i32) * b.powi((k - j) as i32);
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
        out
    }
}

impl FittedFunction for PolyFit {
    fn arity(&self) -> usize {
        1
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let basis = legendre_all(self.to_t(x[0]), self.degree);
        out[0] = basis.iter().zip(&self.coef).map(|(b, c)| b * c).sum();
    }

    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }

    fn label(&self) -> String {
        format!("poly(degree={})", self.degree)
    }
}

/// Least-squares polynomial of the given degree. Rank-deficient designs get
/// the minimum-norm solution.
pub fn fit_poly(s: &Sample, degree: usize) -> Result<PolyFit> {
    if s.d() != 1 {
        return Err(Error::config("polynomial regression supports a single covariate"));
    }
    let (lo, hi) = min_max(s.x_flat());
    let mut fit = PolyFit { degree, lo, hi, coef: vec![0.0; degree + 1], range: vec![(0.0, 0.0)] };
    let n = s.n();
    let mut m = DMatrix::<f64>::zeros(n, degree + 1);
    for (i, &x) in s.x_flat().iter().enumerate() {
        for (k, v) in legendre_all(fit.to_t(x), degree).into_iter().enumerate() {
            m[(i, k)] = v;
        }
    }
    let z = DVector::from_column_slice(s.z());
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (n.max(degree + 1) as f64);
    let coef = svd.solve(&z, eps).map_err(|e| Error::numerical(format!("polynomial least squares failed: {e}")))?;
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::numerical(format!("non-finite polynomial coefficients at degree {degree}")));
    }
    fit.coef = coef.iter().copied().collect();
    fit.range = vec![min_max(&predict(&fit, s))];
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct PolySelection {
    pub degrees: Vec<usize>,
    pub cv_risks: Vec<f64>,
    pub selected: usize,
    pub fit: PolyFit,
}

/// Degree in `0..=max_degree` chosen by CV (ties toward the smaller degree),
/// then refit on the full sample.
pub fn fit_poly_cv(s: &Sample, max_degree: usize, plan: &FoldPlan, exec: Exec) -> Result<PolySelection> {
    let degrees: Vec<usize> = (0..=max_degree).collect();
    let cv_risks = degrees
        .iter()
        .map(|&p| cv_risk_with(exec, |tr| fit_poly(tr, p), Loss::SquaredError, s, plan))
        .collect::<Result<Vec<f64>>>()?;
    let best = cv_argmin(&cv_risks).ok_or_else(|| Error::numerical("all polynomial degrees had non-finite CV risk"))?;
    let fit = fit_poly(s, degrees[best])?;
    let selected = degrees[best];
    Ok(PolySelection { degrees, cv_risks, selected, fit })
}

pub(crate) const POLY_MAGIC: &str = "plugeff-poly 1";

impl PolyFit {
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{POLY_MAGIC}")?;
        writeln!(w, "degree {}", self.degree)?;
        writeln!(w, "interval {:.16e} {:.16e}", self.lo, self.hi)?;
        writeln!(w, "range {:.16e} {:.16e}", self.range[0].0, self.range[0].1)?;
        write!(w, "coef")?;
        for c in &self.coef {
            write!(w, " {c:.16e}")?;
        }
        writeln!(w)?;
        Ok(())
    }

    pub fn read_text<R: std::io::BufRead>(r: R) -> Result<PolyFit> {
        let mut recs = crate::textio::Records::read(r, POLY_MAGIC, "polynomial fit")?;
        let degree: usize = recs.expect("degree", Some(1))?.num(0)?;
        let iv = recs.expect("interval", Some(2))?;
        let rg = recs.expect("range", Some(2))?;
        let c = recs.expect("coef", Some(degree + 1))?;
        recs.finish()?;
        Ok(PolyFit { degree, lo: iv.num(0)?, hi: iv.num(1)?, coef: c.nums()?, range: vec![(rg.num(0)?, rg.num(1)?)] })
    }
}
