//! Data-adaptive series: spans of basis functions composed with an initial
//! fit, fitted by least squares (or logistic regression) within the span.

mod fit;
mod io;
mod select;
mod space;

pub use fit::{fit_series, SeriesFit};
pub use io::{read_series_text, write_series_text};
pub use select::{default_k_grid, select_k_cv, select_k_cv_with, KSelection};
pub use space::{
    build_series_space, build_series_space_with, trig_frequency, trig_term, RangeTransform, SeriesKind, SeriesSpace,
    TensorLayout, TENSOR_COLUMN_CAP,
};
