//! Lag-window estimates from the quantile autocovariances.

use std::str::FromStr;

use num_complex::Complex64;

use super::ar::PSD_FLOOR;
use crate::error::{Error, Result};
use crate::qdft::Qacf;
use crate::spectrum::{clip_psd, SpectrumField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// `h(x) = ½(1 + cos πx)` on `|x| ≤ 1`.
    TukeyHanning,
}

impl Window {
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Window::TukeyHanning if x.abs() <= 1.0 => 0.5 * (1.0 + (std::f64::consts::PI * x).cos()),
            Window::TukeyHanning => 0.0,
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tukey-hanning" | "tukey" | "hanning" => Ok(Window::TukeyHanning),
            other => Err(Error::domain(format!("unknown lag window '{other}'"))),
        }
    }
}

/// `Ŝ(ω, α) = Σ_{|τ|≤M} h(τ/M) Γ̂(τ, α) e^{−iωτ}`, made positive definite by
/// eigenvalue clipping. `M = 0` keeps only lag 0.
pub fn lw_estimate(acf: &Qacf, bandwidth: usize, window: Window, freqs: &[f64]) -> Result<SpectrumField> {
    if bandwidth > acf.tau_max() {
        return Err(Error::domain(format!(
            "bandwidth {bandwidth} exceeds the largest available lag {}",
            acf.tau_max()
        )));
    }
    let m = acf.m();
    let grid = acf.grid().clone();
    let weights: Vec<f64> = (0..=bandwidth)
        .map(|tau| if bandwidth == 0 { 1.0 } else { window.weight(tau as f64 / bandwidth as f64) })
        .collect();
    let mut out = SpectrumField::zeros(m, freqs.to_vec(), grid.clone());
    for l in 0..grid.len() {
        let gamma = acf.level(l);
        for (fi, &w) in freqs.iter().enumerate() {
            let mut s = gamma[0].map(|x| Complex64::new(x, 0.0));
            for tau in 1..=bandwidth {
                let e = Complex64::from_polar(weights[tau], -w * tau as f64);
                // Γ(τ) e^{−iωτ} + Γ(τ)ᵀ e^{iωτ}
                s += gamma[tau].map(|x| x * e) + gamma[tau].transpose().map(|x| x * e.conj());
            }
            out.set_matrix(fi, l, &clip_psd(&s, PSD_FLOOR));
        }
    }
    Ok(out)
}
