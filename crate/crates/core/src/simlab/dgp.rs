//! Data-generating processes of the simulation studies, with closed-form
//! regression functions and quadrature-based true targets.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::fitted::{FnFit, SharedFit};
use crate::loss::expit;
use crate::rng::rng_from_seed;
use crate::summaries::Summary;

use super::quad::integrate;

/// Relative accuracy promised for [`true_targets`].
pub const TARGET_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dgp {
    /// `X ~ N(0,1)`, `theta0(x) = exp{-(-1 + 2x + 2x^2)/2}`, `Z | X`
    /// exponential with mean `theta0(X)`; summary `P theta^2`.
    HalExp,
    /// `X ~ U(-1,1)`, six-piece step/quadratic `theta0`, `N(0, 0.25^2)`
    /// noise; summary `P theta^2`.
    StepTrig,
    /// `X ~ U(-1,1)`, `theta0 = cos(10x)`, `N(0,1)` noise; summary
    /// `P f(theta)` for a `C^1` but not `C^2` function `f`.
    RoughF,
    /// Treatment `A | X ~ Bern(expit(-X))`, discontinuous arm means,
    /// `N(0, 0.25^2)` noise; summary `Var(mu_1 - mu_0)`.
    HteStep,
    /// Smooth arm means `exp(-x^2 + 0.8ax + 0.5a)` with a propensity that is
    /// `C^2` but not `C^3`; summary `Var(mu_1 - mu_0)`.
    HteRoughG,
    /// Degenerate test process: `X ~ U(-1,1)`, `Z = c + N(0, sigma^2)`;
    /// summary `P theta^2`.
    Constant { c: f64, sigma: f64 },
}

/// True summary value and influence-function variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub psi: f64,
    pub xi2: f64,
    /// Achieved relative quadrature accuracy.
    pub rel_error: f64,
}

/// Step function shared by the `StepTrig` regression and the control arm of
/// `HteStep`. It is zero on `[-1/2, -1/4)`.
pub fn step_trig_theta(x: f64) -> f64 {
    if x < -0.75 {
        1.0
    } else if x < -0.5 {
        PI
    } else if x < -0.25 {
        0.0
    } else if x < 0.25 {
        10.0 * x * x
    } else if x < 0.5 {
        std::f64::consts::SQRT_2
    } else if x < 0.75 {
        (-1.0f64).exp()
    } else {
        3.0f64.cbrt()
    }
}

fn hte_step_mu1(x: f64) -> f64 {
    if x < -1.0 / 3.0 {
        x * x
    } else if x < 1.0 / 3.0 {
        x.exp()
    } else {
        1.0
    }
}

fn hte_rough_mu(a: f64, x: f64) -> f64 {
    (-x * x + 0.8 * a * x + 0.5 * a).exp()
}

fn hte_rough_g(x: f64) -> f64 {
    let eta = if x <= -0.5 {
        -5.0 / 3.0 * x.powi(3) - 3.75 * x * x - 5.0 / 3.0 * x - 25.0 / 96.0
    } else if x <= 0.0 {
        5.0 / 6.0 * x.powi(4) + 5.0 / 3.0 * x.powi(3)
    } else if x <= 0.5 {
        5.0 / 3.0 * x.powi(3)
    } else {
        5.0 * x * x - 3.75 * x + 5.0 / 6.0
    };
    expit(eta)
}

/// The `C^1` summary map of `RoughF`.
pub fn rough_f(z: f64) -> f64 {
    if z < -0.5 {
        3.0 / (10.0 * PI) * (5.0 * PI * z).cos() - 0.375
    } else if z < 0.0 {
        -1.5 * z * z
    } else if z < 0.5 {
        3.0 * z * z
    } else {
        -1.5 * (2.0 - 4.0 * z).exp() - 3.0 * z + 3.75
    }
}

pub fn rough_f_prime(z: f64) -> f64 {
    if z < -0.5 {
        -1.5 * (5.0 * PI * z).sin()
    } else if z < 0.0 {
        -3.0 * z
    } else if z < 0.5 {
        6.0 * z
    } else {
        6.0 * (2.0 - 4.0 * z).exp() - 3.0
    }
}

const ALL_NAMES: &str = "hal_exp, step_trig, rough_f, hte_step, hte_rough_g, constant";

impl Dgp {
    pub fn name(&self) -> &'static str {
        match self {
            Dgp::HalExp => "hal_exp",
            Dgp::StepTrig => "step_trig",
            Dgp::RoughF => "rough_f",
            Dgp::HteStep => "hte_step",
            Dgp::HteRoughG => "hte_rough_g",
            Dgp::Constant { .. } => "constant",
        }
    }

    /// Parses a process name; `constant` takes its parameters as
    /// `constant:c:sigma` (default `constant:1:1`).
    pub fn from_name(s: &str) -> Result<Dgp> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let dgp = match head {
            "hal_exp" => Dgp::HalExp,
            "step_trig" => Dgp::StepTrig,
            "rough_f" => Dgp::RoughF,
            "hte_step" => Dgp::HteStep,
            "hte_rough_g" => Dgp::HteRoughG,
            "constant" => {
                let mut num = |default: f64| -> Result<f64> {
                    parts.next().map_or(Ok(default), |p| {
                        p.parse().map_err(|_| Error::config(format!("bad number `{p}` in `{s}`")))
                    })
                };
                let c = num(1.0)?;
                let sigma = num(1.0)?;
                if !(sigma >= 0.0) {
                    return Err(Error::config(format!("noise level must be >= 0 in `{s}`")));
                }
                return Ok(Dgp::Constant { c, sigma });
            }
            other => return Err(Error::config(format!("unknown data-generating process `{other}` (expected {ALL_NAMES})"))),
        };
        if parts.next().is_some() {
            return Err(Error::config(format!("`{head}` takes no parameters")));
        }
        Ok(dgp)
    }

    pub fn has_treatment(&self) -> bool {
        matches!(self, Dgp::HteStep | Dgp::HteRoughG)
    }

    /// The summary whose truth the process is built around.
    pub fn summary(&self) -> Summary {
        match self {
            Dgp::RoughF => Summary::smooth("rough_f", rough_f, rough_f_prime),
            Dgp::HteStep | Dgp::HteRoughG => Summary::HteVariance,
            _ => Summary::MomentKappa(2),
        }
    }

    /// Regression function at `x`: `(mu_0, mu_1)` for treatment processes.
    pub fn theta0_into(&self, x: f64, out: &mut [f64]) {
        match *self {
            Dgp::HalExp => out[0] = (-(-1.0 + 2.0 * x + 2.0 * x * x) / 2.0).exp(),
            Dgp::StepTrig => out[0] = step_trig_theta(x),
            Dgp::RoughF => out[0] = (10.0 * x).cos(),
            Dgp::HteStep => {
                out[0] = step_trig_theta(x);
                out[1] = hte_step_mu1(x);
            }
            Dgp::HteRoughG => {
                out[0] = hte_rough_mu(0.0, x);
                out[1] = hte_rough_mu(1.0, x);
            }
            Dgp::Constant { c, .. } => out[0] = c,
        }
    }

    pub fn arity(&self) -> usize {
        if self.has_treatment() {
            2
        } else {
            1
        }
    }

    /// `P(A = 1 | X = x)` for treatment processes.
    pub fn propensity(&self, x: f64) -> Option<f64> {
        match self {
            Dgp::HteStep => Some(expit(-x)),
            Dgp::HteRoughG => Some(hte_rough_g(x)),
            _ => None,
        }
    }

    /// `Var(Z | X = x)` (the same in both arms).
    pub fn noise_var(&self, x: f64) -> f64 {
        match *self {
            Dgp::HalExp => {
                let mut t = [0.0];
                self.theta0_into(x, &mut t);
                t[0] * t[0]
            }
            Dgp::StepTrig | Dgp::HteStep | Dgp::HteRoughG => 0.0625,
            Dgp::RoughF => 1.0,
            Dgp::Constant { sigma, .. } => sigma * sigma,
        }
    }

    /// Variation norm of the regression function, where known in closed form.
    pub fn theta0_variation_norm(&self) -> Option<f64> {
        match *self {
            // rises from 0 to its peak exp(3/4) at x = -1/2, then back to 0
            Dgp::HalExp => Some(2.0 * 0.75f64.exp()),
            Dgp::Constant { c, .. } => Some(c.abs()),
            _ => None,
        }
    }

    /// Oracle HAL bound `||theta0||_v + ||2 theta0||_v` for `P theta^2`.
    pub fn oracle_bound(&self) -> Option<f64> {
        match self {
            Dgp::HalExp | Dgp::Constant { .. } => self.theta0_variation_norm().map(|v| 3.0 * v),
            _ => None,
        }
    }

    /// The true regression function as a fit over `s` (for oracle checks).
    pub fn theta0_fit(&self, s: &Sample) -> SharedFit {
        let dgp = *self;
        Arc::new(FnFit::new(
            format!("truth({})", self.name()),
            self.arity(),
            move |x: &[f64], out: &mut [f64]| dgp.theta0_into(x[0], out),
            s,
        ))
    }

    /// The true propensity score as a fit over `s`.
    pub fn propensity_fit(&self, s: &Sample) -> Option<SharedFit> {
        self.propensity(0.0)?;
        let dgp = *self;
        Some(Arc::new(FnFit::new(
            format!("propensity({})", self.name()),
            1,
            move |x: &[f64], out: &mut [f64]| out[0] = dgp.propensity(x[0]).unwrap_or(0.5),
            s,
        )))
    }

    /// Draws `n` observations; a pure function of `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::config("sample size must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(if self.has_treatment() { n } else { 0 });
        let mut theta = [0.0; 2];
        for _ in 0..n {
            let xi: f64 = match self {
                Dgp::HalExp => StandardNormal.sample(&mut rng),
                _ => rng.gen_range(-1.0..1.0),
            };
            self.theta0_into(xi, &mut theta);
            let zi = match *self {
                Dgp::HalExp => {
                    let rate = 1.0 / theta[0];
                    let e = Exp::new(rate).map_err(|e| Error::numerical(format!("exponential rate {rate}: {e}")))?;
                    e.sample(&mut rng)
                }
                Dgp::HteStep | Dgp::HteRoughG => {
                    let g = self.propensity(xi).unwrap_or(0.5);
                    let ai = u8::from(rng.gen::<f64>() < g);
                    a.push(ai);
                    theta[ai as usize] + 0.25 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                }
                _ => {
                    let sd = self.noise_var(xi).sqrt();
                    let noise = Normal::new(0.0, sd).map_err(|e| Error::numerical(format!("noise sd {sd}: {e}")))?;
                    theta[0] + noise.sample(&mut rng)
                }
            };
            x.push(xi);
            z.push(zi);
        }
        if self.has_treatment() {
            Sample::with_treatment(x, z, a)
        } else {
            Sample::from_columns(x, z)
        }
    }

    /// Covariate density and the points where the integrands may kink.
    fn integration_plan(&self) -> (fn(f64) -> f64, Vec<f64>) {
        fn normal_pdf(x: f64) -> f64 {
            (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
        }
        fn uniform_pdf(_: f64) -> f64 {
            0.5
        }
        match self {
            // the normal mass beyond |x| = 12 is below 1e-32
            Dgp::HalExp => (normal_pdf, vec![-12.0, -0.5, 12.0]),
            Dgp::StepTrig => (uniform_pdf, vec![-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0]),
            Dgp::RoughF => {
                // cos(10x) crosses -1/2, 0 and 1/2 at these points
                let mut b = vec![-1.0, 1.0];
                for level in [-0.5f64, 0.0, 0.5] {
                    let base = level.acos();
                    for k in -3..=3 {
                        for sign in [-1.0, 1.0] {
                            let x = (sign * base + 2.0 * PI * k as f64) / 10.0;
                            if x > -1.0 && x < 1.0 {
                                b.push(x);
                            }
                        }
                    }
                }
                b.sort_by(f64::total_cmp);
                b.dedup();
                (uniform_pdf, b)
            }
            Dgp::HteStep => (
                uniform_pdf,
                vec![-1.0, -0.75, -0.5, -1.0 / 3.0, -0.25, 0.25, 1.0 / 3.0, 0.5, 0.75, 1.0],
            ),
            Dgp::HteRoughG => (uniform_pdf, vec![-1.0, -0.5, 0.0, 0.5, 1.0]),
            Dgp::Constant { .. } => (uniform_pdf, vec![-1.0, 1.0]),
        }
    }
}

/// `Psi(theta0)` and `xi^2 = P0 IF^2` by piecewise Gauss–Legendre
/// quadrature, accurate to [`TARGET_REL_TOL`] or better.
pub fn true_targets(dgp: &Dgp) -> Result<Targets> {
    let (pdf, breaks) = dgp.integration_plan();
    let tol = 1e-10;
    let summary = dgp.summary();
    if dgp.has_treatment() {
        // first pass: the mean effect
        let tau = |x: f64| {
            let mut t = [0.0; 2];
            dgp.theta0_into(x, &mut t);
            t[1] - t[0]
        };
        let m = integrate(|x, o| o[0] = tau(x) * pdf(x), &breaks, 1, tol)?;
        let mean = m.values[0];
        let q = integrate(
            |x, o| {
                let c = tau(x) - mean;
                let g = dgp.propensity(x).unwrap_or(0.5);
                let s2 = dgp.noise_var(x);
                let p = pdf(x);
                o[0] = c * c * p;
                o[1] = (4.0 * c * c * s2 * (1.0 / g + 1.0 / (1.0 - g)) + c.powi(4)) * p;
            },
            &breaks,
            2,
            tol,
        )?;
        let psi = q.values[0];
        return finish(psi, q.values[1] - psi * psi, m.rel_error.max(q.rel_error));
    }
    let q = integrate(
        |x, o| {
            let mut t = [0.0];
            dgp.theta0_into(x, &mut t);
            let (f, df) = summary.moment_fn(t[0]).unwrap_or((0.0, 0.0));
            let p = pdf(x);
            o[0] = f * p;
            o[1] = (df * df * dgp.noise_var(x) + f * f) * p;
        },
        &breaks,
        2,
        tol,
    )?;
    let psi = q.values[0];
    finish(psi, q.values[1] - psi * psi, q.rel_error)
}

fn finish(psi: f64, xi2: f64, rel_error: f64) -> Result<Targets> {
    if rel_error > TARGET_REL_TOL || !psi.is_finite() || !xi2.is_finite() {
        return Err(Error::numerical(format!(
            "true targets reached only relative accuracy {rel_error:.3e} (need {TARGET_REL_TOL:.0e})"
        )));
    }
    Ok(Targets { psi, xi2, rel_error })
}
