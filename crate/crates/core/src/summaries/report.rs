use std::io::Write;

use crate::error::{Error, Result};

/// Upper 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    PlugIn,
    OneStep,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::PlugIn => "plug_in",
            EstimatorKind::OneStep => "one_step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldInterval {
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    /// Zero estimated variance: the interval collapses to a point.
    pub degenerate: bool,
}

impl WaldInterval {
    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// `psi_hat ± 1.959964 · sqrt(mean(IF²) / n)`.
pub fn wald_ci(psi_hat: f64, if_values: &[f64]) -> Result<WaldInterval> {
    let n = if_values.len();
    if n < 2 {
        return Err(Error::data("a Wald interval needs at least two observations"));
    }
    if !psi_hat.is_finite() || if_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("influence function values or estimate are not finite"));
    }
    let second = if_values.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let se = (second / n as f64).sqrt();
    Ok(WaldInterval { se, lo: psi_hat - Z_975 * se, hi: psi_hat + Z_975 * se, degenerate: se == 0.0 })
}

/// Estimate, influence-function values and Wald interval.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub summary: String,
    pub n: usize,
    pub psi_hat: f64,
    pub if_values: Vec<f64>,
    pub if_mean: f64,
    pub ci: WaldInterval,
    /// Propensity values clipped by the positivity guard.
    pub truncated: usize,
    pub provenance: String,
    pub seed: Option<u64>,
}

impl EstimateReport {
    pub fn se(&self) -> f64 {
        self.ci.se
    }

    pub fn ci_lo(&self) -> f64 {
        self.ci.lo
    }

    pub fn ci_hi(&self) -> f64 {
        self.ci.hi
    }

    pub const CSV_HEADER: [&'static str; 11] =
        ["estimator", "summary", "n", "psi_hat", "se", "ci_lo", "ci_hi", "if_mean", "degenerate", "seed", "fit"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.estimator.name().to_string(),
            self.summary.clone(),
            self.n.to_string(),
            format!("{:.17e}", self.psi_hat),
            format!("{:.17e}", self.ci.se),
            format!("{:.17e}", self.ci.lo),
            format!("{:.17e}", self.ci.hi),
            format!("{:.17e}", self.if_mean),
            self.ci.degenerate.to_string(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.provenance.clone(),
        ]
    }

    /// Writes a header and one row per report.
    pub fn write_csv<W: Write>(reports: &[EstimateReport], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        wr.write_record(Self::CSV_HEADER).map_err(io)?;
        for r in reports {
            wr.write_record(r.csv_record()).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}
