//! File formats: the binary container and CSV tables.

mod container;
mod text;

pub use container::{decode, encode, read_container, read_spectrum, write_container, Container};
pub use text::{
    fmt_f64, read_series_csv, write_qacf_csv, write_qdft_csv, write_qser_csv, write_series_csv, write_spectrum_csv,
};
