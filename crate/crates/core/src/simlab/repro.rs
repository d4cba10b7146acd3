//! Presets reproducing the published tables and figures.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

use super::dgp::Dgp;
use super::mc::{csv_err, McConfig, McResult};
use super::roster::EstimatorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReproId {
    Table1,
    Table2,
    Table3,
    Table4,
    Table5,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

pub const ALL_REPRO_IDS: [ReproId; 10] = [
    ReproId::Table1,
    ReproId::Table2,
    ReproId::Table3,
    ReproId::Table4,
    ReproId::Table5,
    ReproId::Fig2,
    ReproId::Fig3,
    ReproId::Fig4,
    ReproId::Fig5,
    ReproId::Fig6,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    /// 200 replicates on two sample sizes.
    #[default]
    Desk,
    /// 1000 replicates on the full published grids (hours of CPU time).
    Full,
}

impl Scale {
    pub fn from_name(s: &str) -> Result<Scale> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::config(format!("unknown scale `{other}` (expected desk, full)"))),
        }
    }
}

/// Fixed `K` values of the sensitivity figure.
pub const FIG5_K: [usize; 5] = [2, 6, 10, 20, 30];

impl fmt::Display for ReproId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ReproId {
    pub fn name(&self) -> &'static str {
        match self {
            ReproId::Table1 => "table1",
            ReproId::Table2 => "table2",
            ReproId::Table3 => "table3",
            ReproId::Table4 => "table4",
            ReproId::Table5 => "table5",
            ReproId::Fig2 => "fig2",
            ReproId::Fig3 => "fig3",
            ReproId::Fig4 => "fig4",
            ReproId::Fig5 => "fig5",
            ReproId::Fig6 => "fig6",
        }
    }

    pub fn from_name(s: &str) -> Result<ReproId> {
        ALL_REPRO_IDS.iter().copied().find(|id| id.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = ALL_REPRO_IDS.iter().map(|id| id.name()).collect();
            Error::config(format!("unknown table or figure `{s}` (valid: {})", valid.join(", ")))
        })
    }

    /// Whether the output is figure data (long format) rather than a table.
    pub fn is_figure(&self) -> bool {
        matches!(self, ReproId::Fig2 | ReproId::Fig3 | ReproId::Fig4 | ReproId::Fig5 | ReproId::Fig6)
    }

    /// Monte Carlo configuration behind the table or figure.
    pub fn config(&self, scale: Scale) -> McConfig {
        use EstimatorSpec::*;
        let desk = scale == Scale::Desk;
        let replicates = if desk { 200 } else { 1000 };
        let full_grid = vec![500, 1000, 2000, 5000, 10000, 20000];
        let (dgp, n_grid, roster, folds, trim) = match self {
            ReproId::Table1 | ReproId::Fig2 | ReproId::Fig3 => (
                Dgp::HalExp,
                if desk { vec![500, 1000] } else { vec![500, 1000, 2000, 5000, 10000] },
                vec![HalCv, HalGcv, HalGcvPlus, HalOracle],
                10,
                0.0,
            ),
            ReproId::Table2 | ReproId::Fig4 => (
                Dgp::StepTrig,
                if desk { vec![500, 2000] } else { full_grid },
                vec![Poly, Xgb, Xgb1Step, XgbTrig],
                10,
                0.0,
            ),
            ReproId::Fig5 => (
                Dgp::StepTrig,
                if desk { vec![2000] } else { full_grid },
                FIG5_K.iter().map(|&k| XgbTrigK(k)).collect(),
                10,
                0.0,
            ),
            ReproId::Table3 => (Dgp::RoughF, if desk { vec![1000, 2000] } else { full_grid }, vec![KernelTrig], 10, 0.0),
            ReproId::Table4 | ReproId::Fig6 => (
                Dgp::HteStep,
                if desk { vec![1000, 2000] } else { full_grid },
                vec![Poly, Xgb, Xgb1Step, XgbTrig],
                5,
                0.01,
            ),
            ReproId::Table5 => (Dgp::HteRoughG, if desk { vec![1000, 2000] } else { full_grid }, vec![KernelTrig], 5, 0.0),
        };
        McConfig { trim_fraction: trim, folds, ..McConfig::new(dgp, n_grid, replicates, roster) }
    }
}

pub const FIGURE_CSV_HEADER: [&str; 7] = ["figure", "dgp", "estimator", "n", "replicate", "metric", "value"];

/// Long-format plot data: per-cell `relative_mse` and `rel_abs_bias` for
/// the MSE/bias figures, per-cell `n_mse` for the `K` figure and
/// per-replicate `m_ratio = M.cv / M.oracle` for the bound figure.
pub fn write_figure_csv<W: Write>(id: ReproId, result: &McResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIGURE_CSV_HEADER).map_err(csv_err)?;
    let mut row = |est: &str, n: usize, rep: Option<usize>, metric: &str, value: f64| {
        out.write_record([
            id.name().to_string(),
            result.dgp.clone(),
            est.to_string(),
            n.to_string(),
            rep.map(|r| r.to_string()).unwrap_or_default(),
            metric.to_string(),
            format!("{value}"),
        ])
        .map_err(csv_err)
    };
    match id {
        ReproId::Fig3 => {
            for r in result.records.iter().filter(|r| r.estimator == "M.cv") {
                if let Some(ratio) = m_ratio(r) {
                    row("M.cv", r.n, Some(r.replicate), "m_ratio", ratio)?;
                }
            }
        }
        ReproId::Fig5 => {
            for c in &result.cells {
                row(&c.estimator, c.n, None, "n_mse", c.n as f64 * c.mse)?;
                row(&c.estimator, c.n, None, "relative_mse", c.relative_mse)?;
            }
        }
        _ => {
            for c in &result.cells {
                row(&c.estimator, c.n, None, "relative_mse", c.relative_mse)?;
                row(&c.estimator, c.n, None, "rel_abs_bias", c.rel_abs_bias)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `M.cv / M.oracle` of one replicate of the bound study.
pub fn m_ratio(record: &super::mc::ReplicateRecord) -> Option<f64> {
    let m = record.tuning("M")?;
    Dgp::HalExp.oracle_bound().map(|o| m / o)
}
