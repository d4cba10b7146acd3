//! Efficient plug-in estimation of summaries of nonparametric regression
//! functions: undersmoothed Highly Adaptive Lasso, data-adaptive series on
//! top of an initial machine-learning fit, influence-function inference and
//! a Monte Carlo lab for the accompanying simulation studies.

pub mod cv;
pub mod data;
pub mod error;
pub mod fitted;
pub mod folds;
pub mod hal;
pub mod loss;
pub mod ml_init;
pub mod par;
pub mod rng;
pub mod series;
pub mod simlab;
pub mod store;
pub mod summaries;
mod textio;

pub use cv::{argmin_prefer_first, cv_risk, cv_risk_with, log_grid};
pub use data::Sample;
pub use error::{Error, ErrorKind, Result};
pub use fitted::{predict, predict_outputs, ArmFit, ConstantFit, FittedFunction, FnFit, SharedFit};
pub use folds::{make_folds, FoldPlan};
pub use loss::{empirical_risk, Loss};
pub use par::Exec;
