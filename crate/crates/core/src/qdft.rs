//! Quantile DFT, quantile periodogram, quantile series and quantile ACF.
//!
//! For channel `j`, level `α` and Fourier index `v`, the QDFT is assembled
//! from the trigonometric quantile-regression coefficients `β̂` at
//! `ω_v = 2πv/n`:
//!
//! ```text
//! Z(ω_0, α) = n β̂₁,     Z(π, α) = n β̂₂,     Z(ω_v, α) = (n/2)(β̂₂ − i β̂₃)
//! ```
//!
//! Only `v ≤ ⌊n/2⌋` is solved; the rest follows from conjugate symmetry.
//! The quantile series (QSER) is the inverse DFT of the QDFT. Its mean is the
//! sample quantile, and its ordinary periodogram is the quantile periodogram.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::series::{fourier_frequencies, MultiSeries, QuantileGrid};
use crate::spectrum::SpectrumField;
use crate::trig_qr::{QrFit, QuantileRegression, TrigDesign};

/// Complex QDFT values indexed by (channel, level, Fourier index).
#[derive(Debug, Clone, PartialEq)]
pub struct QdftArray {
    n: usize,
    m: usize,
    grid: QuantileGrid,
    z: Vec<Complex64>,
}

impl QdftArray {
    pub fn from_values(n: usize, m: usize, grid: QuantileGrid, z: Vec<Complex64>) -> Result<Self> {
        if z.len() != n * m * grid.len() {
            return Err(Error::domain(format!(
                "{} values for a {m} × {} × {n} QDFT",
                z.len(),
                grid.len()
            )));
        }
        Ok(Self { n, m, grid, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.z
    }

    pub fn get(&self, j: usize, l: usize, v: usize) -> Complex64 {
        self.z[(j * self.grid.len() + l) * self.n + v]
    }

    /// All `n` frequencies for one channel and level.
    pub fn row(&self, j: usize, l: usize) -> &[Complex64] {
        let o = (j * self.grid.len() + l) * self.n;
        &self.z[o..o + self.n]
    }
}

/// Quantile DFT of every channel at every grid level.
///
/// Each (channel, frequency) task walks the quantile levels in order, warm
/// starting each fit from the previous one. Tasks write to disjoint slots, so
/// the output does not depend on the number of worker threads.
pub fn qdft(series: &MultiSeries, grid: &QuantileGrid) -> Result<QdftArray> {
    let (n, m, levels) = (series.n(), series.m(), grid.levels());
    let half = n / 2;
    let tasks: Vec<(usize, usize)> = (0..m).flat_map(|j| (0..=half).map(move |v| (j, v))).collect();
    let columns: Vec<Vec<Complex64>> = tasks
        .par_iter()
        .map(|&(j, v)| qdft_column(series.channel(j), v, levels).map_err(|e| e.context(format!("channel {}", j + 1))))
        .collect::<Result<_>>()?;

    let nl = levels.len();
    let mut z = vec![Complex64::new(0.0, 0.0); m * nl * n];
    for (&(j, v), col) in tasks.iter().zip(&columns) {
        for (l, &val) in col.iter().enumerate() {
            let base = (j * nl + l) * n;
            z[base + v] = val;
            if v > 0 && n - v != v {
                z[base + n - v] = val.conj();
            }
        }
    }
    Ok(QdftArray {
        n,
        m,
        grid: grid.clone(),
        z,
    })
}

/// QDFT values of one channel at Fourier index `v`, for every level.
pub fn qdft_column(y: &[f64], v: usize, levels: &[f64]) -> Result<Vec<Complex64>> {
    let n = y.len();
    let design = TrigDesign::fourier(n, v)?;
    let qr = QuantileRegression::from_design(&design);
    let mut prev: Option<QrFit> = None;
    let mut out = Vec::with_capacity(levels.len());
    for (l, &alpha) in levels.iter().enumerate() {
        let fit = qr
            .fit_warm(y, alpha, prev.as_ref())
            .map_err(|e| e.context(format!("level {} (α = {alpha}), frequency index {v}", l + 1)))?;
        out.push(coefficients_to_qdft(n, v, &fit.beta));
        prev = Some(fit);
    }
    Ok(out)
}

/// Map regression coefficients at Fourier index `v` to the QDFT value.
pub fn coefficients_to_qdft(n: usize, v: usize, beta: &[f64]) -> Complex64 {
    let nf = n as f64;
    if v == 0 {
        Complex64::new(nf * beta[0], 0.0)
    } else if 2 * v == n {
        Complex64::new(nf * beta[1], 0.0)
    } else {
        Complex64::new(0.5 * nf * beta[1], -0.5 * nf * beta[2])
    }
}

/// Quantile periodogram `n⁻¹ Z_j Z_kᴴ` at `v = 1..=⌊(n−1)/2⌋`.
pub fn qper(q: &QdftArray) -> SpectrumField {
    let (n, m, nl) = (q.n, q.m, q.grid.len());
    let freqs = fourier_frequencies(n);
    let nf = freqs.len();
    let mut field = SpectrumField::zeros(m, freqs, q.grid.clone());
    let inv_n = 1.0 / n as f64;
    for fi in 0..nf {
        for l in 0..nl {
            let cell = field.cell_mut(fi, l);
            for j in 0..m {
                let zj = q.get(j, l, fi + 1);
                for k in 0..m {
                    cell[j * m + k] = zj * q.get(k, l, fi + 1).conj() * inv_n;
                }
            }
        }
    }
    field
}

/// Real quantile series indexed by (channel, level, time), plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSeries {
    n: usize,
    m: usize,
    grid: QuantileGrid,
    y: Vec<f64>,
    means: Vec<f64>,
}

impl QuantileSeries {
    /// `y` ordered by channel, level, time; `means` by channel, level.
    pub fn from_parts(n: usize, m: usize, grid: QuantileGrid, y: Vec<f64>, means: Vec<f64>) -> Result<Self> {
        let nl = grid.len();
        if y.len() != m * nl * n || means.len() != m * nl {
            return Err(Error::domain("quantile series dimensions do not match"));
        }
        Ok(Self { n, m, grid, y, means })
    }

    /// Quantile series with means taken from the data.
    pub fn from_series(n: usize, m: usize, grid: QuantileGrid, y: Vec<f64>) -> Result<Self> {
        let nl = grid.len();
        if y.len() != m * nl * n {
            return Err(Error::domain("quantile series dimensions do not match"));
        }
        let means = y.chunks_exact(n).map(|s| s.iter().sum::<f64>() / n as f64).collect();
        Ok(Self { n, m, grid, y, means })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn series(&self, j: usize, l: usize) -> &[f64] {
        let o = (j * self.grid.len() + l) * self.n;
        &self.y[o..o + self.n]
    }

    pub fn mean(&self, j: usize, l: usize) -> f64 {
        self.means[j * self.grid.len() + l]
    }

    /// The series of every channel at level `l`, each with its time mean removed.
    pub fn demeaned_level(&self, l: usize) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|j| {
                let s = self.series(j, l);
                let mean = s.iter().sum::<f64>() / self.n as f64;
                s.iter().map(|v| v - mean).collect()
            })
            .collect()
    }
}

/// Quantile series by inverse FFT: `y_t = n⁻¹ Σ_v Z_v e^{itω_v}`, `t = 1..=n`.
pub fn qser(q: &QdftArray) -> Result<QuantileSeries> {
    let (n, m, nl) = (q.n, q.m, q.grid.len());
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let mut y = Vec::with_capacity(m * nl * n);
    let mut means = Vec::with_capacity(m * nl);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let inv_n = 1.0 / n as f64;
    for j in 0..m {
        for l in 0..nl {
            buf.copy_from_slice(q.row(j, l));
            fft.process(&mut buf);
            let scale = buf.iter().fold(0.0f64, |s, c| s.max(c.re.abs())) * inv_n;
            let imag = buf.iter().fold(0.0f64, |s, c| s.max(c.im.abs())) * inv_n;
            if imag >= 1e-8 * scale.max(1.0) {
                return Err(Error::Consistency(format!(
                    "quantile series of channel {} at level {} has imaginary part {:.3e}",
                    j + 1,
                    l + 1,
                    imag
                )));
            }
            for t in 1..=n {
                y.push(buf[t % n].re * inv_n);
            }
            means.push(q.row(j, l)[0].re * inv_n);
        }
    }
    Ok(QuantileSeries {
        n,
        m,
        grid: q.grid.clone(),
        y,
        means,
    })
}

/// Quantile autocovariances, one `m × m` matrix per (lag, level).
#[derive(Debug, Clone, PartialEq)]
pub struct Qacf {
    m: usize,
    tau_max: usize,
    grid: QuantileGrid,
    gamma: Vec<f64>,
}

impl Qacf {
    pub fn from_values(m: usize, tau_max: usize, grid: QuantileGrid, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != (tau_max + 1) * grid.len() * m * m {
            return Err(Error::domain("autocovariance dimensions do not match"));
        }
        Ok(Self { m, tau_max, grid, gamma })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }

    pub fn get(&self, tau: usize, l: usize, j: usize, k: usize) -> f64 {
        let m = self.m;
        self.gamma[((tau * self.grid.len() + l) * m + j) * m + k]
    }

    pub fn matrix(&self, tau: usize, l: usize) -> DMatrix<f64> {
        let m = self.m;
        let o = (tau * self.grid.len() + l) * m * m;
        DMatrix::from_row_slice(m, m, &self.gamma[o..o + m * m])
    }

    /// Lags `0..=tau_max` at one level.
    pub fn level(&self, l: usize) -> Vec<DMatrix<f64>> {
        (0..=self.tau_max).map(|tau| self.matrix(tau, l)).collect()
    }
}

/// `Γ(τ) = n⁻¹ Σ_{t>τ} (y_t − ȳ)(y_{t−τ} − ȳ)ᵀ` on the quantile series.
pub fn qacf(qs: &QuantileSeries, tau_max: usize) -> Result<Qacf> {
    let (n, m, nl) = (qs.n, qs.m, qs.grid.len());
    if 2 * tau_max >= n {
        return Err(Error::domain(format!(
            "maximum lag {tau_max} must be below n/2 = {}",
            n as f64 / 2.0
        )));
    }
    let mut gamma = vec![0.0; (tau_max + 1) * nl * m * m];
    for l in 0..nl {
        let d = qs.demeaned_level(l);
        for tau in 0..=tau_max {
            for j in 0..m {
                for k in 0..m {
                    let s: f64 = (tau..n).map(|t| d[j][t] * d[k][t - tau]).sum();
                    gamma[((tau * nl + l) * m + j) * m + k] = s / n as f64;
                }
            }
        }
    }
    Ok(Qacf {
        m,
        tau_max,
        grid: qs.grid.clone(),
        gamma,
    })
}
