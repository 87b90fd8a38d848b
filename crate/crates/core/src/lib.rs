pub mod error;
pub mod estimators;
pub mod granger;
pub mod io;
pub mod qdft;
pub mod series;
pub mod sim;
pub mod spectrum;
pub mod spline;
pub mod trig_qr;

pub use error::{Error, Result};

// The guide's code samples run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quantile-transforms.md")]
    mod quantile_transforms {}
    #[doc = include_str!("../../../book/src/spline-autoregression.md")]
    mod spline_autoregression {}
    #[doc = include_str!("../../../book/src/spectral-estimates.md")]
    mod spectral_estimates {}
    #[doc = include_str!("../../../book/src/divergence-and-simulation.md")]
    mod divergence_and_simulation {}
    #[doc = include_str!("../../../book/src/granger.md")]
    mod granger {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
