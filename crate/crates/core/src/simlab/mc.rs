//! Monte Carlo engine and metric aggregation.

use std::io::Write;

use crate::error::{Error, Result};
use crate::par::{map_range, Exec};
use crate::rng::derive_seed;

use super::dgp::{true_targets, Dgp, Targets};
use super::roster::{EstimatorSpec, Outcome, ReplicateContext};

/// Share of failed replicates per cell above which a run is aborted.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub dgp: Dgp,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub roster: Vec<EstimatorSpec>,
    /// Replicate `r` uses seed `base_seed + r`.
    pub base_seed: u64,
    /// Fraction of the most extreme estimates (split evenly between both
    /// tails) dropped before computing MSE and bias. Coverage always uses
    /// every replicate.
    pub trim_fraction: f64,
    /// Folds for every cross-validation step.
    pub folds: usize,
    pub exec: Exec,
}

impl McConfig {
    pub fn new(dgp: Dgp, n_grid: Vec<usize>, replicates: usize, roster: Vec<EstimatorSpec>) -> McConfig {
        McConfig {
            dgp,
            n_grid,
            replicates,
            roster,
            base_seed: 20_240_101,
            trim_fraction: 0.0,
            folds: 10,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.roster.is_empty() {
            return Err(Error::config("estimator roster is empty"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::config("sample-size grid is empty"));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 2 * self.folds.max(2)) {
            return Err(Error::config(format!("sample size {n} is too small for {}-fold CV", self.folds)));
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::config(format!("trim fraction must lie in [0, 0.5), got {}", self.trim_fraction)));
        }
        if self.base_seed.checked_add(self.replicates as u64).is_none() {
            return Err(Error::config("base seed plus replicate count overflows"));
        }
        for spec in &self.roster {
            spec.check(&self.dgp)?;
        }
        Ok(())
    }
}

/// Seed of replicate `r`.
pub fn replicate_seed(base_seed: u64, r: usize) -> u64 {
    base_seed + r as u64
}

/// Seed of the data drawn for replicate seed `seed` at sample size `n`.
pub fn data_seed(seed: u64, n: usize) -> u64 {
    derive_seed(seed, n as u64)
}

/// One estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub estimator: String,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub outcome: std::result::Result<Outcome, String>,
}

impl ReplicateRecord {
    /// `None` when the estimate failed or its interval is degenerate.
    pub fn covered(&self, psi: f64) -> Option<bool> {
        match &self.outcome {
            Ok(o) if !o.degenerate => Some(o.ci_lo <= psi && psi <= o.ci_hi),
            _ => None,
        }
    }

    pub fn tuning(&self, name: &str) -> Option<f64> {
        self.outcome.as_ref().ok()?.tuning.iter().find(|t| t.0 == name).map(|t| t.1)
    }
}

/// Aggregated metrics of one estimator at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct McCell {
    pub estimator: String,
    pub n: usize,
    /// Successful replicates.
    pub replicates: usize,
    pub failures: usize,
    pub mse: f64,
    pub bias: f64,
    /// `n MSE / xi^2`.
    pub relative_mse: f64,
    /// `sqrt(n) |bias / Psi|`.
    pub rel_abs_bias: f64,
    /// Share of non-degenerate intervals containing the truth; NaN when
    /// every interval was degenerate.
    pub coverage: f64,
    /// `sqrt(p (1 - p) / R)`.
    pub coverage_mc_se: f64,
    /// Replicates with a degenerate (zero-width) interval.
    pub degenerate: usize,
    /// Replicates dropped from MSE and bias by trimming.
    pub trimmed: usize,
}

impl McCell {
    pub fn coverage_defined(&self) -> bool {
        !self.coverage.is_nan()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub dgp: String,
    pub targets: Targets,
    pub cells: Vec<McCell>,
    pub records: Vec<ReplicateRecord>,
}

pub const MC_CSV_HEADER: [&str; 9] =
    ["dgp", "estimator", "n", "replicates", "relative_mse", "rel_abs_bias", "coverage", "coverage_mc_se", "trimmed"];

pub const RECORD_CSV_HEADER: [&str; 12] =
    ["dgp", "estimator", "n", "replicate", "seed", "psi_hat", "se", "ci_lo", "ci_hi", "covered", "tuning", "error"];

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

impl McResult {
    pub fn cell(&self, estimator: &str, n: usize) -> Option<&McCell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.n == n)
    }

    pub fn records_for<'a>(&'a self, estimator: &'a str, n: usize) -> impl Iterator<Item = &'a ReplicateRecord> + 'a {
        self.records.iter().filter(move |r| r.estimator == estimator && r.n == n)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(MC_CSV_HEADER).map_err(csv_err)?;
        for c in &self.cells {
            out.write_record([
                self.dgp.clone(),
                c.estimator.clone(),
                c.n.to_string(),
                c.replicates.to_string(),
                fmt_num(c.relative_mse),
                fmt_num(c.rel_abs_bias),
                fmt_num(c.coverage),
                fmt_num(c.coverage_mc_se),
                c.trimmed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long-format per-replicate records.
    pub fn write_records_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(RECORD_CSV_HEADER).map_err(csv_err)?;
        for r in &self.records {
            let (nums, tuning, err) = match &r.outcome {
                Ok(o) => (
                    [o.psi_hat, o.se, o.ci_lo, o.ci_hi].map(fmt_num),
                    o.tuning.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
                    String::new(),
                ),
                Err(e) => (["NA", "NA", "NA", "NA"].map(String::from), String::new(), e.clone()),
            };
            let covered = match r.covered(self.targets.psi) {
                Some(true) => "1",
                Some(false) => "0",
                None => "NA",
            };
            let mut row = vec![self.dgp.clone(), r.estimator.clone(), r.n.to_string(), r.replicate.to_string(), r.seed.to_string()];
            row.extend(nums);
            row.extend([covered.to_string(), tuning, err]);
            out.write_record(row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::data(format!("{other:?}")),
    }
}

/// Number of estimates dropped from each tail.
pub fn trim_per_tail(fraction: f64, count: usize) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    ((fraction * count as f64 / 2.0).round() as usize).min(count.saturating_sub(1) / 2)
}

/// Metrics of one cell from its successful outcomes.
pub fn aggregate(estimator: &str, n: usize, outcomes: &[&Outcome], failures: usize, targets: &Targets, trim_fraction: f64) -> McCell {
    let r = outcomes.len();
    let mut est: Vec<f64> = outcomes.iter().map(|o| o.psi_hat).collect();
    est.sort_by(f64::total_cmp);
    let t = trim_per_tail(trim_fraction, r);
    let kept = &est[t..r - t];
    let k = kept.len() as f64;
    let mse = kept.iter().map(|e| (e - targets.psi).powi(2)).sum::<f64>() / k;
    let bias = kept.iter().map(|e| e - targets.psi).sum::<f64>() / k;
    let mut covered = 0usize;
    let mut defined = 0usize;
    for o in outcomes {
        if !o.degenerate {
            defined += 1;
            covered += usize::from(o.ci_lo <= targets.psi && targets.psi <= o.ci_hi);
        }
    }
    let (coverage, coverage_mc_se) = if defined == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let p = covered as f64 / defined as f64;
        (p, (p * (1.0 - p) / defined as f64).sqrt())
    };
    let nf = n as f64;
    McCell {
        estimator: estimator.to_string(),
        n,
        replicates: r,
        failures,
        mse,
        bias,
        relative_mse: nf * mse / targets.xi2,
        rel_abs_bias: nf.sqrt() * (bias / targets.psi).abs(),
        coverage,
        coverage_mc_se,
        degenerate: r - defined,
        trimmed: 2 * t,
    }
}

/// Runs every estimator of the roster on `replicates` fresh samples at
/// every sample size. Replicates run in parallel; results are reduced in
/// replicate order, so the output is identical for any thread count.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McResult> {
    cfg.validate()?;
    let targets = true_targets(&cfg.dgp)?;
    let jobs = cfg.n_grid.len() * cfg.replicates;
    let per_job = map_range(cfg.exec, jobs, |j| {
        let n = cfg.n_grid[j / cfg.replicates];
        let rep = j % cfg.replicates;
        let seed = replicate_seed(cfg.base_seed, rep);
        let sample = cfg.dgp.sample(n, data_seed(seed, n));
        let ctx = sample.as_ref().ok().map(|s| ReplicateContext::new(cfg.dgp, s, targets, cfg.folds, seed));
        cfg.roster
            .iter()
            .map(|spec| {
                let outcome = match (&sample, &ctx) {
                    (Ok(_), Some(ctx)) => ctx.run(*spec).map_err(|e| e.to_string()),
                    (Err(e), _) => Err(e.to_string()),
                    _ => unreachable!(),
                };
                if let Err(e) = &outcome {
                    log::warn!("{} n={n} replicate {rep}: {e}", spec.name());
                }
                ReplicateRecord { estimator: spec.name(), n, replicate: rep, seed, outcome }
            })
            .collect::<Vec<_>>()
    });
    let records: Vec<ReplicateRecord> = per_job.into_iter().flatten().collect();
    let mut cells = Vec::with_capacity(cfg.n_grid.len() * cfg.roster.len());
    for &n in &cfg.n_grid {
        for spec in &cfg.roster {
            let name = spec.name();
            let recs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.n == n && r.estimator == name).collect();
            let ok: Vec<&Outcome> = recs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let failures = recs.len() - ok.len();
            if failures as f64 > MAX_FAILURE_RATE * cfg.replicates as f64 || ok.is_empty() {
                let first = recs.iter().find_map(|r| r.outcome.as_ref().err()).cloned().unwrap_or_default();
                return Err(Error::numerical(format!(
                    "{name} failed on {failures} of {} replicates at n = {n} (limit {:.0}%); first failure: {first}",
                    cfg.replicates,
                    100.0 * MAX_FAILURE_RATE
                )));
            }
            cells.push(aggregate(&name, n, &ok, failures, &targets, cfg.trim_fraction));
        }
    }
    Ok(McResult { dgp: cfg.dgp.name().to_string(), targets, cells, records })
}
