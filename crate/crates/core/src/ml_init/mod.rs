//! Initial machine-learning fits and the polynomial-sieve baseline.

mod boosting;
mod kernel;
mod poly;

pub use boosting::{
    fit_boosting, BoostingConfig, BoostingFit, BoostingObjective, EarlyStopping,
};
pub use kernel::{bandwidth_grid, fit_kernel, fit_kernel_cv, KernelConfig, KernelFit, KernelKind, KernelSelection};
pub use poly::{fit_poly, fit_poly_cv, legendre_all, PolyFit, PolySelection, DEFAULT_MAX_DEGREE};
