//! Nadaraya–Watson kernel regression for a single covariate.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::cv::{cv_argmin, cv_risk_with};
use crate::data::{min_max, Sample};
use crate::error::{Error, Result};
use crate::fitted::{predict, FittedFunction};
use crate::folds::FoldPlan;
use crate::loss::Loss;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl KernelKind {
    #[inline]
    fn weight(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-0.5 * u * u).exp(),
            KernelKind::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support in bandwidth units. The Gaussian tail
    /// beyond 10 bandwidths (relative weight below 2e-22) is dropped.
    fn reach(self) -> f64 {
        match self {
            KernelKind::Gaussian => 10.0,
            KernelKind::Epanechnikov => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub kernel: KernelKind,
}

#[derive(Debug)]
pub struct KernelFit {
    xs: Vec<f64>,
    zs: Vec<f64>,
    cfg: KernelConfig,
    range: Vec<(f64, f64)>,
    fallbacks: AtomicUsize,
    /// Epanechnikov only: prefix sums over the sorted points, see
    /// [`PrefixSums`].
    prefix: Option<PrefixSums>,
}

/// Windows with at most this many points are summed directly.
const DIRECT_WINDOW: usize = 32;

/// Running sums of `t^p` and `t^p z` (`p = 0, 1, 2`) with `t = x - center`.
/// The Epanechnikov weight is a quadratic in `t`, so any window sum of
/// weights or weighted outcomes follows from six differences.
#[derive(Debug, Clone)]
struct PrefixSums {
    center: f64,
    sums: Vec<[f64; 6]>,
    z_lo: f64,
    z_hi: f64,
}

impl PrefixSums {
    fn new(xs: &[f64], zs: &[f64]) -> Self {
        let center = xs.iter().sum::<f64>() / xs.len() as f64;
        let mut sums = Vec::with_capacity(xs.len() + 1);
        let mut acc = [0.0; 6];
        sums.push(acc);
        for (&x, &z) in xs.iter().zip(zs) {
            let t = x - center;
            let terms = [1.0, t, t * t, z, t * z, t * t * z];
            for (a, v) in acc.iter_mut().zip(terms) {
                *a += v;
            }
            sums.push(acc);
        }
        let (z_lo, z_hi) = min_max(zs);
        PrefixSums { center, sums, z_lo, z_hi }
    }

    /// `(sum of weights, sum of weighted outcomes)` over rows `lo..hi`, up
    /// to the constant factor 3/4.
    fn window(&self, x: f64, h: f64, lo: usize, hi: usize) -> (f64, f64) {
        let d: [f64; 6] = std::array::from_fn(|k| self.sums[hi][k] - self.sums[lo][k]);
        let t = x - self.center;
        let h2 = h * h;
        // sum (1 - (t - t_i)^2 / h^2) v_i for v = 1 and v = z
        let den = d[0] - (t * t * d[0] - 2.0 * t * d[1] + d[2]) / h2;
        let num = d[3] - (t * t * d[3] - 2.0 * t * d[4] + d[5]) / h2;
        (den, num)
    }
}

impl Clone for KernelFit {
    fn clone(&self) -> Self {
        KernelFit {
            xs: self.xs.clone(),
            zs: self.zs.clone(),
            cfg: self.cfg,
            range: self.range.clone(),
            fallbacks: AtomicUsize::new(self.fallbacks.load(Ordering::Relaxed)),
            prefix: self.prefix.clone(),
        }
    }
}

impl KernelFit {
    pub fn config(&self) -> KernelConfig {
        self.cfg
    }

    /// Number of evaluations so far that had no kernel mass and used the
    /// nearest training point instead.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    fn value(&self, x: f64) -> f64 {
        let h = self.cfg.bandwidth;
        let reach = self.cfg.kernel.reach() * h;
        let lo = self.xs.partition_point(|&v| v < x - reach);
        let hi = self.xs.partition_point(|&v| v <= x + reach);
        if let Some(p) = &self.prefix {
            if hi - lo > DIRECT_WINDOW {
                let (den, num) = p.window(x, h, lo, hi);
                // a window this large only has a tiny weight total when
                // nearly every point sits at its edge; sum those directly
                if den > 1e-6 * (hi - lo) as f64 {
                    return (num / den).clamp(p.z_lo, p.z_hi);
                }
            }
        }
        let (mut num, mut den) = (0.0, 0.0);
        for k in lo..hi {
            let w = self.cfg.kernel.weight((x - self.xs[k]) / h);
            num += w * self.zs[k];
            den += w;
        }
        if den > 0.0 {
            return num / den;
        }
        self.fallbacks.fetch_add(1, Ordering::Relaxed);
        let pos = self.xs.partition_point(|&v| v < x);
        let nearest = match (pos.checked_sub(1), (pos < self.xs.len()).then_some(pos)) {
            (Some(a), Some(b)) => {
                if x - self.xs[a] <= self.xs[b] - x {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("fit has at least one point"),
        };
        // average over ties at the nearest location
        let v = self.xs[nearest];
        let a = self.xs.partition_point(|&t| t < v);
        let b = self.xs.partition_point(|&t| t <= v);
        self.zs[a..b].iter().sum::<f64>() / (b - a) as f64
    }
}

impl FittedFunction for KernelFit {
    fn arity(&self) -> usize {
        1
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.value(x[0]);
    }

    fn fitted_range(&self) -> &[(f64, f64)] {
        &self.range
    }

    fn label(&self) -> String {
        format!("kernel(h={:.4e})", self.cfg.bandwidth)
    }
}

pub fn fit_kernel(s: &Sample, cfg: KernelConfig) -> Result<KernelFit> {
    if s.d() != 1 {
        return Err(Error::config("kernel regression supports a single covariate"));
    }
    if !(cfg.bandwidth > 0.0) || !cfg.bandwidth.is_finite() {
        return Err(Error::config(format!("kernel bandwidth must be positive, got {}", cfg.bandwidth)));
    }
    let mut idx: Vec<usize> = (0..s.n()).collect();
    let x = s.x_flat();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut fit = KernelFit {
        xs: idx.iter().map(|&i| x[i]).collect(),
        zs: idx.iter().map(|&i| s.z()[i]).collect(),
        cfg,
        range: vec![(0.0, 0.0)],
        fallbacks: AtomicUsize::new(0),
        prefix: None,
    };
    if cfg.kernel == KernelKind::Epanechnikov {
        fit.prefix = Some(PrefixSums::new(&fit.xs, &fit.zs));
    }
    fit.range = vec![min_max(&predict(&fit, s))];
    fit.fallbacks.store(0, Ordering::Relaxed);
    Ok(fit)
}

/// 20 log-spaced bandwidths from range/200 to range.
pub fn bandwidth_grid(s: &Sample) -> Vec<f64> {
    let (lo, hi) = min_max(s.x_flat());
    let r = (hi - lo).max(1e-12);
    crate::cv::log_grid(r / 200.0, r, 20)
}

#[derive(Debug, Clone)]
pub struct KernelSelection {
    pub bandwidths: Vec<f64>,
    pub cv_risks: Vec<f64>,
    pub selected: f64,
    pub fit: KernelFit,
}

/// CV-selected bandwidth (ties toward the larger, smoother bandwidth).
pub fn fit_kernel_cv(s: &Sample, kernel: KernelKind, grid: &[f64], plan: &FoldPlan, exec: Exec) -> Result<KernelSelection> {
    if grid.is_empty() {
        return Err(Error::config("bandwidth grid is empty"));
    }
    let cv_risks = grid
        .iter()
        .map(|&h| {
            cv_risk_with(exec, |tr| fit_kernel(tr, KernelConfig { bandwidth: h, kernel }), Loss::SquaredError, s, plan)
        })
        .collect::<Result<Vec<f64>>>()?;
    // scan from the smoothest end so ties favour larger bandwidths
    let rev: Vec<f64> = cv_risks.iter().rev().copied().collect();
    let best = grid.len() - 1 - cv_argmin(&rev).ok_or_else(|| Error::numerical("all bandwidths had non-finite CV risk"))?;
    let fit = fit_kernel(s, KernelConfig { bandwidth: grid[best], kernel })?;
    Ok(KernelSelection { bandwidths: grid.to_vec(), cv_risks, selected: grid[best], fit })
}


pub(crate) const KERNEL_MAGIC: &str = "plugeff-kernel 1";

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Epanechnikov => "epanechnikov",
        }
    }

    pub fn from_name(s: &str) -> Result<KernelKind> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            other => Err(Error::config(format!("unknown kernel `{other}` (expected gaussian or epanechnikov)"))),
        }
    }
}

impl KernelFit {
    /// The fit is its training data; every point is stored.
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{KERNEL_MAGIC}")?;
        writeln!(w, "kernel {}", self.cfg.kernel.name())?;
        writeln!(w, "bandwidth {:.16e}", self.cfg.bandwidth)?;
        writeln!(w, "range {:.16e} {:.16e}", self.range[0].0, self.range[0].1)?;
        writeln!(w, "points {}", self.xs.len())?;
        for (x, z) in self.xs.iter().zip(&self.zs) {
            writeln!(w, "p {x:.16e} {z:.16e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: std::io::BufRead>(r: R) -> Result<KernelFit> {
        let mut recs = crate::textio::Records::read(r, KERNEL_MAGIC, "kernel fit")?;
        let kr = recs.expect("kernel", Some(1))?;
        let kernel = KernelKind::from_name(&kr.args()[0]).map_err(|e| crate::textio::at(kr.no, &e.to_string()))?;
        let bandwidth: f64 = recs.expect("bandwidth", Some(1))?.num(0)?;
        let rg = recs.expect("range", Some(2))?;
        let count = recs.expect("points", Some(1))?;
        let n: usize = count.num(0)?;
        if n == 0 {
            return Err(crate::textio::at(count.no, "a kernel fit needs at least one point"));
        }
        let (mut xs, mut zs) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let p = recs.expect("p", Some(2))?;
            let x: f64 = p.num(0)?;
            if xs.last().is_some_and(|&prev| x < prev) {
                return Err(crate::textio::at(p.no, "kernel points must be sorted by x"));
            }
            xs.push(x);
            zs.push(p.num(1)?);
        }
        recs.finish()?;
        let cfg = KernelConfig { bandwidth, kernel };
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::data(format!("kernel bandwidth must be positive, got {bandwidth}")));
        }
        let prefix = (kernel == KernelKind::Epanechnikov).then(|| PrefixSums::new(&xs, &zs));
        Ok(KernelFit {
            xs,
            zs,
            cfg,
            range: vec![(rg.num(0)?, rg.num(1)?)],
            fallbacks: AtomicUsize::new(0),
            prefix,
        })
    }
}
