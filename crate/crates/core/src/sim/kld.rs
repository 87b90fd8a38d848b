use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::PSD_FLOOR;
use crate::spectrum::{clip_psd, SpectrumField};

/// `tr(ŜS⁻¹) − log(|Ŝ|/|S|) − m` for one pair of Hermitian matrices.
///
/// Both matrices are floored to be positive definite first. The divergence
/// is evaluated as `Σ (μ − log μ − 1)` over the eigenvalues `μ` of
/// `L⁻¹ŜL⁻ᴴ`, `S = LLᴴ`, which keeps every term non-negative.
pub fn cell_divergence(estimate: &DMatrix<Complex64>, truth: &DMatrix<Complex64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::GridMismatch("matrices of different sizes".into()));
    }
    let s_hat = clip_psd(estimate, PSD_FLOOR);
    let s = clip_psd(truth, PSD_FLOOR);
    if s_hat == s {
        return Ok(0.0);
    }
    let l = s
        .cholesky()
        .ok_or_else(|| Error::Singular("true spectrum is not positive definite".into()))?
        .l();
    let left = l
        .solve_lower_triangular(&s_hat)
        .ok_or_else(|| Error::Singular("true spectrum is singular".into()))?;
    let whitened = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or_else(|| Error::Singular("true spectrum is singular".into()))?;
    let whitened = (&whitened + whitened.adjoint()).map(|x| x * 0.5);
    let mu = whitened.symmetric_eigenvalues();
    let mut total = 0.0;
    for &u in mu.iter() {
        if !(u > 0.0) {
            return Err(Error::Singular("estimate is not positive definite".into()));
        }
        total += u - u.ln() - 1.0;
    }
    Ok(total)
}

/// The Kullback–Leibler spectral divergence of `estimate` from `truth`,
/// averaged over every (frequency, level) cell.
pub fn kld(estimate: &SpectrumField, truth: &SpectrumField) -> Result<f64> {
    if !estimate.same_grid(truth) {
        return Err(Error::GridMismatch(
            "estimate and truth are on different frequency or quantile grids".into(),
        ));
    }
    let (nf, nl) = (truth.freqs().len(), truth.grid().len());
    let cells: Vec<f64> = (0..nf * nl)
        .into_par_iter()
        .map(|i| {
            let (fi, l) = (i / nl, i % nl);
            cell_divergence(&estimate.matrix(fi, l), &truth.matrix(fi, l))
                .map_err(|e| e.context(format!("frequency {}, level {}", truth.freqs()[fi], truth.grid().levels()[l])))
        })
        .collect::<Result<_>>()?;
    // Summed in cell order whatever the thread count.
    Ok(cells.iter().sum::<f64>() / cells.len() as f64)
}
