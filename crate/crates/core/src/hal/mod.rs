//! Highly Adaptive Lasso: L1-constrained empirical risk minimization over
//! the indicator basis `1(X_{j,s} <= x_s)`.

mod basis;
mod cd;
mod fit;
mod io;
mod select;
mod tv;

pub use basis::{
    build_hal_basis, build_hal_basis_capped, default_max_interaction, indicator, nominal_column_count, HalBasis,
    DEFAULT_COLUMN_CAP,
};
pub use fit::{
    fit_hal, fit_hal_path, fit_hal_with, variation_norm, HalComponent, HalConfig, HalFit, HalSolverKind, HalTerm,
};
pub use select::{
    default_candidates, enlarge_m, gradient_varnorm_bound, select_m_cv, select_m_cv_with, BoundSelection,
    BoundStrategy, Relaxation,
};
pub use tv::{anchored_tv, solve_anchored_tv};

#[doc(hidden)]
pub mod testing {
    //! Hooks used by the oracle tests.
    pub use super::tv::{lambda_max as tv_lambda_max, objective as tv_objective};
}
