//! Quantile-spectrum estimators: per-level Yule–Walker AR, lag window, and
//! spline autoregression.

pub mod ar;
pub mod lw;
pub mod sar;
pub mod select;

pub(crate) use ar::PSD_FLOOR;
pub use ar::{ar_estimate, ar_spectrum, least_squares_var, yule_walker, yule_walker_matrices, ArFit};
pub use lw::{lw_estimate, Window};
pub use sar::{fit_sar, sar_spectrum, SarModel, SarSolution, SarSystem};
pub use select::{
    default_spar_grid, fit_sar_auto, select_order, select_spar, OrderChoice, OrderSelection, SarFit, Smoothing,
    SparSelection,
};
