//! Matrix-valued functions on a (frequency × quantile) grid.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::series::QuantileGrid;

/// An `m × m` complex matrix at every (frequency, quantile level) pair.
///
/// Frequencies are angular, in `[0, π]`; outputs report `f = ω / 2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumField {
    m: usize,
    freqs: Vec<f64>,
    grid: QuantileGrid,
    values: Vec<Complex64>,
}

impl SpectrumField {
    pub fn zeros(m: usize, freqs: Vec<f64>, grid: QuantileGrid) -> Self {
        let len = freqs.len() * grid.len() * m * m;
        Self {
            m,
            freqs,
            grid,
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// `values` ordered by frequency, then level, then row, then column.
    pub fn from_values(
        m: usize,
        freqs: Vec<f64>,
        grid: QuantileGrid,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != freqs.len() * grid.len() * m * m {
            return Err(Error::domain(format!(
                "{} values do not fill a {} × {} grid of {m} × {m} matrices",
                values.len(),
                freqs.len(),
                grid.len()
            )));
        }
        Ok(Self {
            m,
            freqs,
            grid,
            values,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn offset(&self, fi: usize, l: usize) -> usize {
        (fi * self.grid.len() + l) * self.m * self.m
    }

    pub fn get(&self, fi: usize, l: usize, j: usize, k: usize) -> Complex64 {
        self.values[self.offset(fi, l) + j * self.m + k]
    }

    pub fn cell(&self, fi: usize, l: usize) -> &[Complex64] {
        let o = self.offset(fi, l);
        &self.values[o..o + self.m * self.m]
    }

    pub fn cell_mut(&mut self, fi: usize, l: usize) -> &mut [Complex64] {
        let o = self.offset(fi, l);
        let mm = self.m * self.m;
        &mut self.values[o..o + mm]
    }

    pub fn matrix(&self, fi: usize, l: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.m, self.m, self.cell(fi, l))
    }

    pub fn set_matrix(&mut self, fi: usize, l: usize, s: &DMatrix<Complex64>) {
        let m = self.m;
        let cell = self.cell_mut(fi, l);
        for j in 0..m {
            for k in 0..m {
                cell[j * m + k] = s[(j, k)];
            }
        }
    }

    /// Mutable cells in storage order, one slice per (frequency, level).
    pub fn cells_mut(&mut self) -> std::slice::ChunksExactMut<'_, Complex64> {
        let mm = self.m * self.m;
        self.values.chunks_exact_mut(mm)
    }

    /// True when both fields live on the same frequencies, levels and dimension.
    pub fn same_grid(&self, other: &Self) -> bool {
        self.m == other.m && self.freqs == other.freqs && self.grid == other.grid
    }

    /// Largest `|S_jk − conj(S_kj)|` over the field.
    pub fn max_hermitian_error(&self) -> f64 {
        let m = self.m;
        self.values
            .chunks_exact(m * m)
            .flat_map(|c| {
                (0..m).flat_map(move |j| (0..m).map(move |k| (c[j * m + k] - c[k * m + j].conj()).norm()))
            })
            .fold(0.0, f64::max)
    }
}

/// Symmetrize a complex matrix to its Hermitian part.
pub fn hermitian_part(s: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (s + s.adjoint()).map(|v| v * 0.5)
}

/// Project onto Hermitian matrices with eigenvalues at least `rel · trace`.
pub fn clip_psd(s: &DMatrix<Complex64>, rel: f64) -> DMatrix<Complex64> {
    let h = hermitian_part(s);
    let eig = SymmetricEigen::new(h.clone());
    let trace: f64 = eig.eigenvalues.iter().sum();
    let floor = rel * trace.max(0.0);
    if eig.eigenvalues.iter().all(|&e| e >= floor) {
        return h;
    }
    let clipped = eig.eigenvalues.map(|e| Complex64::new(e.max(floor), 0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.adjoint();
    hermitian_part(&out)
}

/// Real-symmetric version of [`clip_psd`].
pub fn clip_psd_real(s: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let h = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h.clone());
    let trace: f64 = eig.eigenvalues.iter().sum();
    let floor = rel * trace.max(0.0);
    if eig.eigenvalues.iter().all(|&e| e >= floor) {
        return h;
    }
    let clipped = eig.eigenvalues.map(|e| e.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (&out + out.transpose()) * 0.5
}
