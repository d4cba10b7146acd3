//! Simulation studies: data-generating processes with known truth, the
//! estimator rosters, a Monte Carlo engine and table/figure presets.

mod dgp;
mod mc;
mod quad;
mod repro;
mod roster;

pub use dgp::{rough_f, rough_f_prime, step_trig_theta, true_targets, Dgp, Targets, TARGET_REL_TOL};
pub use mc::{
    aggregate, data_seed, replicate_seed, run_monte_carlo, trim_per_tail, McCell, McConfig, McResult, ReplicateRecord,
    MAX_FAILURE_RATE, MC_CSV_HEADER, RECORD_CSV_HEADER,
};
pub use quad::{integrate, Quadrature};
pub use repro::{m_ratio, write_figure_csv, ReproId, Scale, ALL_REPRO_IDS, FIG5_K, FIGURE_CSV_HEADER};
pub use roster::{EstimatorSpec, Outcome, GCV_PLUS_EPSILON};
