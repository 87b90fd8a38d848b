//! Per-level vector autoregressions and their spectra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qdft::Qacf;
use crate::series::QuantileGrid;
use crate::spectrum::{clip_psd_real, SpectrumField};

/// Eigenvalue floor (relative to the trace) applied to residual covariances.
pub(crate) const PSD_FLOOR: f64 = 1e-10;
/// Largest tolerated condition number of `I − A(ω)`.
const MAX_CONDITION: f64 = 1e12;

/// A VAR(p) fit at one quantile level: `y_t = Σ A_τ y_{t−τ} + e_t`, `Cov(e) = V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub p: usize,
    pub a: Vec<DMatrix<f64>>,
    pub v: DMatrix<f64>,
    pub level: f64,
}

/// `Γ(h)` for any integer lag from the non-negative lags, with `Γ(−h) = Γ(h)ᵀ`.
fn lagged(gamma: &[DMatrix<f64>], h: isize) -> DMatrix<f64> {
    if h >= 0 {
        gamma[h as usize].clone()
    } else {
        gamma[(-h) as usize].transpose()
    }
}

/// Solve the Yule–Walker equations at level `l` of `acf`.
pub fn yule_walker(acf: &Qacf, l: usize, p: usize) -> Result<ArFit> {
    if p > acf.tau_max() {
        return Err(Error::domain(format!(
            "order {p} needs autocovariances up to lag {p}, have {}",
            acf.tau_max()
        )));
    }
    let level = acf.grid().levels()[l];
    let gamma = acf.level(l);
    let (a, v) = yule_walker_matrices(&gamma, p).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("at level {level}: {msg}")),
        other => other,
    })?;
    Ok(ArFit { p, a, v, level })
}

/// Yule–Walker solution from `Γ(0), …, Γ(p)`.
pub fn yule_walker_matrices(gamma: &[DMatrix<f64>], p: usize) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let m = gamma[0].nrows();
    if p == 0 {
        return Ok((Vec::new(), clip_psd_real(&gamma[0], PSD_FLOOR)));
    }
    // Block (τ, s) of Γ_p is E[y_{t−τ} y_{t−s}ᵀ] = Γ(s − τ).
    let mut big = DMatrix::zeros(m * p, m * p);
    let mut small = DMatrix::zeros(m, m * p);
    for tau in 0..p {
        for s in 0..p {
            big.view_mut((tau * m, s * m), (m, m))
                .copy_from(&lagged(gamma, s as isize - tau as isize));
        }
        small.view_mut((0, tau * m), (m, m)).copy_from(&gamma[tau + 1]);
    }
    let big = (&big + big.transpose()) * 0.5;
    let chol = big.clone().cholesky().ok_or_else(|| {
        let e = SymmetricEigen::new(big).eigenvalues.min();
        Error::Singular(format!("block-Toeplitz matrix not positive definite (smallest eigenvalue {e:e})"))
    })?;
    let at = chol.solve(&small.transpose());
    let coef = at.transpose();
    let v = &gamma[0] - &coef * small.transpose();
    let a = (0..p).map(|tau| coef.columns(tau * m, m).into_owned()).collect();
    Ok((a, clip_psd_real(&v, PSD_FLOOR)))
}

/// Least-squares VAR(p) without intercept on `y_t`, `t = start..n`.
///
/// `channels[j]` holds channel `j`; `start ≥ p`. The residual covariance is
/// divided by the number of fitted time points.
pub fn least_squares_var(channels: &[Vec<f64>], p: usize, start: usize) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let m = channels.len();
    let n = channels[0].len();
    if start < p || start >= n {
        return Err(Error::domain(format!("sample start {start} invalid for order {p}, length {n}")));
    }
    let q = m * p;
    let count = n - start;
    let mut gzz = DMatrix::zeros(q, q);
    let mut gyz = DMatrix::zeros(m, q);
    let mut gyy = DMatrix::zeros(m, m);
    let mut z = vec![0.0; q];
    for t in start..n {
        for tau in 0..p {
            for j in 0..m {
                z[tau * m + j] = channels[j][t - tau - 1];
            }
        }
        for a in 0..q {
            for b in 0..=a {
                gzz[(a, b)] += z[a] * z[b];
            }
        }
        for j in 0..m {
            let y = channels[j][t];
            for a in 0..q {
                gyz[(j, a)] += y * z[a];
            }
            for k in 0..=j {
                gyy[(j, k)] += y * channels[k][t];
            }
        }
    }
    gzz.fill_upper_triangle_with_lower_triangle();
    gyy.fill_upper_triangle_with_lower_triangle();
    if p == 0 {
        return Ok((Vec::new(), gyy / count as f64));
    }
    let chol = gzz
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("lagged design of order {p} is rank deficient")))?;
    let coef = chol.solve(&gyz.transpose()).transpose();
    let v: DMatrix<f64> = (&gyy - &coef * gyz.transpose()) / count as f64;
    let v = (&v + v.transpose()) * 0.5;
    let a = (0..p).map(|tau| coef.columns(tau * m, m).into_owned()).collect();
    Ok((a, v))
}

/// `(I − A(ω))⁻¹ V (I − A(ω))⁻ᴴ` with `A(ω) = Σ A_τ e^{−iωτ}`.
pub(crate) fn transfer_spectrum(a: &[DMatrix<f64>], v: &DMatrix<f64>, omega: f64) -> Result<DMatrix<Complex64>> {
    let m = v.nrows();
    let mut t = DMatrix::<Complex64>::identity(m, m);
    for (tau, at) in a.iter().enumerate() {
        let e = Complex64::from_polar(1.0, -omega * (tau + 1) as f64);
        t -= at.map(|x| Complex64::new(x, 0.0) * e);
    }
    let sv = t.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Unstable(format!(
            "transfer matrix I − A(ω) near singular at ω = {omega:.6} (condition {cond:e})"
        )));
    }
    let inv = t
        .try_inverse()
        .ok_or_else(|| Error::Unstable(format!("transfer matrix singular at ω = {omega:.6}")))?;
    let vc = v.map(|x| Complex64::new(x, 0.0));
    let s = &inv * vc * inv.adjoint();
    Ok((&s + s.adjoint()).map(|x| x * 0.5))
}

/// The AR spectrum of one fit on a frequency grid, as a single-level field.
pub fn ar_spectrum(fit: &ArFit, freqs: &[f64]) -> Result<SpectrumField> {
    let m = fit.v.nrows();
    let grid = QuantileGrid::new(vec![fit.level])?;
    let mut out = SpectrumField::zeros(m, freqs.to_vec(), grid);
    for (fi, &w) in freqs.iter().enumerate() {
        let s = transfer_spectrum(&fit.a, &fit.v, w)?;
        out.set_matrix(fi, 0, &s);
    }
    Ok(out)
}

/// Yule–Walker AR spectra of order `p` at every level of `acf`.
pub fn ar_estimate(acf: &Qacf, p: usize, freqs: &[f64]) -> Result<SpectrumField> {
    let grid = acf.grid().clone();
    let m = acf.m();
    let columns: Vec<Vec<DMatrix<Complex64>>> = (0..grid.len())
        .into_par_iter()
        .map(|l| {
            let fit = yule_walker(acf, l, p)?;
            freqs
                .iter()
                .map(|&w| {
                    transfer_spectrum(&fit.a, &fit.v, w)
                        .map_err(|e| e.context(format!("AR spectrum at α = {}", fit.level)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = SpectrumField::zeros(m, freqs.to_vec(), grid);
    for (l, col) in columns.iter().enumerate() {
        for (fi, s) in col.iter().enumerate() {
            out.set_matrix(fi, l, s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_yule_walker() {
        let (a, v) = yule_walker_matrices(&[scalar(1.0), scalar(0.8)], 1).unwrap();
        assert!((a[0][(0, 0)] - 0.8).abs() < 1e-14);
        assert!((v[(0, 0)] - 0.36).abs() < 1e-14);
    }

    #[test]
    fn white_noise_has_no_dynamics() {
        let g0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let z = DMatrix::zeros(2, 2);
        let (a, v) = yule_walker_matrices(&[g0.clone(), z.clone(), z], 2).unwrap();
        assert!(a.iter().all(|m| m.amax() < 1e-14));
        assert!((v - g0).amax() < 1e-14);
    }

    #[test]
    fn scalar_spectrum_closed_form() {
        let a = [scalar(0.8)];
        let v = scalar(0.36);
        let s0 = transfer_spectrum(&a, &v, 0.0).unwrap()[(0, 0)];
        let spi = transfer_spectrum(&a, &v, std::f64::consts::PI).unwrap()[(0, 0)];
        assert!((s0.re - 9.0).abs() < 1e-12 && s0.im.abs() < 1e-14);
        assert!((spi.re - 1.0 / 9.0).abs() < 1e-14);
        let flat = transfer_spectrum(&[], &DMatrix::identity(2, 2), 1.0).unwrap();
        assert!((flat - DMatrix::<Complex64>::identity(2, 2)).camax() < 1e-15);
    }

    #[test]
    fn unit_root_is_flagged() {
        let err = transfer_spectrum(&[scalar(1.0)], &scalar(1.0), 0.0).unwrap_err();
        assert!(matches!(err, Error::Unstable(_)));
    }

    #[test]
    fn least_squares_recovers_exact_recursion() {
        let mut y = vec![1.0, 0.5];
        for t in 2..40 {
            let next = 0.5 * y[t - 1] - 0.3 * y[t - 2] + if t % 7 == 0 { 1.0 } else { 0.0 };
            y.push(next);
        }
        // With the shocks as the only error, the fit is close but not exact;
        // without them it is exact.
        let mut z = vec![1.0, 0.5];
        for t in 2..40 {
            z.push(0.5 * z[t - 1] - 0.3 * z[t - 2]);
        }
        let (a, v) = least_squares_var(&[z], 2, 2).unwrap();
        assert!((a[0][(0, 0)] - 0.5).abs() < 1e-9 && (a[1][(0, 0)] + 0.3).abs() < 1e-9);
        assert!(v[(0, 0)].abs() < 1e-12);
        assert!(least_squares_var(&[y], 2, 1).is_err());
    }
}
