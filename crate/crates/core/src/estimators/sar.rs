//! Spline autoregression: a VAR whose coefficient matrices are natural cubic
//! splines in the quantile level, fitted jointly over the grid by
//! roughness-penalised least squares.
//!
//! With the cardinal basis of [`crate::spline`], the coefficient of basis
//! function `k` is the value of the curve at knot `k`, so the Gram matrix
//! `Σ_ℓ Z_ℓ Z_ℓᵀ` is block diagonal over levels and only the penalty couples
//! them. Writing the penalty as `Q R⁻¹ Qᵀ` with banded `Q` and `R`, the
//! Woodbury identity reduces each solve to a block-pentadiagonal system whose
//! size does not grow with the series length, and the hat-matrix trace needs
//! only the band of that system's inverse.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;

use super::ar::{transfer_spectrum, PSD_FLOOR};
use crate::error::{Error, Result};
use crate::qdft::QuantileSeries;
use crate::series::QuantileGrid;
use crate::spectrum::{clip_psd_real, SpectrumField};
use crate::spline::{lambda_to_spar, smooth_scalar, spar_to_lambda, SmoothedCurve, SplineBasis};

/// Relative normal-equation residual above which the structured solve is
/// replaced by a dense one.
const RESIDUAL_TOL: f64 = 1e-10;

/// Gram quantities of the SAR least-squares problem at a fixed order.
///
/// Building the system is the only pass over the data; solves for different
/// penalties reuse it.
#[derive(Debug, Clone)]
pub struct SarSystem {
    n_eff: usize,
    m: usize,
    p: usize,
    grid: QuantileGrid,
    basis: Arc<SplineBasis>,
    /// `G_k = Z̃_k Z̃_kᵀ`, with rows of `Z̃_k` ordered (lag, channel).
    gram: Vec<DMatrix<f64>>,
    /// `F_k = Y_k Z̃_kᵀ`.
    cross: Vec<DMatrix<f64>>,
    /// `Y_k Y_kᵀ`.
    outer: Vec<DMatrix<f64>>,
    /// `G_k⁻¹` and `G_k⁻¹ F_kᵀ`, when every `G_k` is positive definite.
    inverses: Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)>,
    ratio: f64,
}

/// Coefficients at one penalty, stored per knot.
#[derive(Debug, Clone)]
pub struct SarSolution {
    pub lambda: f64,
    /// `coef[k] = [A_1(α_k), …, A_p(α_k)]`, an `m × mp` matrix.
    pub coef: Vec<DMatrix<f64>>,
    pub hat_trace: f64,
}

impl SarSystem {
    /// Lagged Gram matrices of the demeaned quantile series at order `p`.
    ///
    /// `basis` must have its knots at the grid levels of `qs`.
    pub fn new(qs: &QuantileSeries, p: usize, basis: Arc<SplineBasis>) -> Result<Self> {
        let (n, m) = (qs.n(), qs.m());
        let grid = qs.grid().clone();
        if basis.knots() != grid.levels() {
            return Err(Error::domain("spline knots must coincide with the quantile grid"));
        }
        if p == 0 || p >= n / 2 {
            return Err(Error::domain(format!("order {p} must lie in 1..{}", n / 2)));
        }
        let n_eff = n - p;
        let q = m * p;
        let blocks: Vec<_> = (0..grid.len())
            .into_par_iter()
            .map(|l| {
                let y = qs.demeaned_level(l);
                let z = DMatrix::from_fn(q, n_eff, |r, c| y[r % m][c + p - 1 - r / m]);
                let resp = DMatrix::from_fn(m, n_eff, |j, c| y[j][c + p]);
                let gram = &z * z.transpose();
                let gram = (&gram + gram.transpose()) * 0.5;
                (gram, &resp * z.transpose(), &resp * resp.transpose())
            })
            .collect();
        let mut gram = Vec::with_capacity(blocks.len());
        let mut cross = Vec::with_capacity(blocks.len());
        let mut outer = Vec::with_capacity(blocks.len());
        for (g, f, o) in blocks {
            gram.push(g);
            cross.push(f);
            outer.push(o);
        }
        let trace_g: f64 = gram.iter().map(|g| g.trace()).sum();
        let trace_d = (p * m) as f64 * basis.omega().trace();
        let ratio = if trace_d > 0.0 { trace_g / n_eff as f64 / trace_d } else { 1.0 };
        let inverses = gram
            .iter()
            .zip(&cross)
            .map(|(g, f)| {
                let chol = g.clone().cholesky()?;
                Some((chol.inverse(), chol.solve(&f.transpose())))
            })
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().unzip());
        Ok(Self {
            n_eff,
            m,
            p,
            grid,
            basis,
            gram,
            cross,
            outer,
            inverses,
            ratio,
        })
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    /// Number of fitted time points per level, `n − p`.
    pub fn effective_length(&self) -> usize {
        self.n_eff
    }

    /// `r = (n−p)⁻¹ Σ_ℓ tr(Z_ℓ Z_ℓᵀ) / tr(D)`, the scale of the penalty.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn lambda_for_spar(&self, spar: f64) -> f64 {
        spar_to_lambda(spar, self.ratio)
    }

    pub fn spar_for_lambda(&self, lambda: f64) -> f64 {
        lambda_to_spar(lambda, self.ratio)
    }

    /// Solve the penalised normal equations at `lambda`.
    pub fn solve(&self, lambda: f64) -> Result<SarSolution> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("penalty must be finite and ≥ 0, got {lambda}")));
        }
        let c = self.n_eff as f64 * lambda;
        let penalised = c > 0.0 && self.grid.len() >= 3;
        let q = self.m * self.p;
        if !penalised {
            let (_, w) = self.inverses.as_ref().ok_or_else(|| {
                Error::Singular("a lagged Gram matrix is singular and there is no penalty".into())
            })?;
            let coef = w.iter().map(|x| x.transpose()).collect();
            let hat_trace = (self.m * self.grid.len() * q) as f64;
            return Ok(SarSolution { lambda, coef, hat_trace });
        }
        if let Some(sol) = self.structured(lambda, c) {
            let (res, scale) = self.residual_of(&sol);
            if res <= RESIDUAL_TOL * scale {
                return Ok(sol);
            }
        }
        self.dense(lambda, c)
    }

    fn structured(&self, lambda: f64, c: f64) -> Option<SarSolution> {
        let (ginv, w) = self.inverses.as_ref()?;
        let f = self.basis.factors();
        let nb = f.q.len();
        let q = self.m * self.p;
        let qcol = |k: usize, a: usize| f.q[a][k - a];
        // Upper band of S = R̃/c + Q̃ᵀ G⁻¹ Q̃: s[a][d] = S_{a, a+d}.
        let mut s: Vec<[DMatrix<f64>; 3]> = (0..nb)
            .map(|_| std::array::from_fn(|_| DMatrix::zeros(q, q)))
            .collect();
        for a in 0..nb {
            for d in 0..3 {
                if a + d >= nb {
                    break;
                }
                let blk = &mut s[a][d];
                for k in a + d..=a + 2 {
                    *blk += &ginv[k] * (qcol(k, a) * qcol(k, a + d));
                }
                let r = match d {
                    0 => f.r_diag[a],
                    1 => f.r_off[a],
                    _ => 0.0,
                };
                for i in 0..q {
                    blk[(i, i)] += r / c;
                }
            }
        }
        let band = BandLdl::new(&s)?;
        let t: Vec<DMatrix<f64>> = (0..nb)
            .map(|a| (0..3).fold(DMatrix::zeros(q, self.m), |acc, d| acc + &w[a + d] * qcol(a + d, a)))
            .collect();
        let x = band.solve(t);
        let coef = (0..self.grid.len())
            .map(|k| {
                let mut corr = DMatrix::zeros(q, self.m);
                for a in k.saturating_sub(2)..=k.min(nb.saturating_sub(1)) {
                    if k >= a && k - a <= 2 {
                        corr += &x[a] * qcol(k, a);
                    }
                }
                (&w[k] - &ginv[k] * corr).transpose()
            })
            .collect();
        let sig = band.selected_inverse();
        let mut tr_se = 0.0;
        for a in 0..nb {
            tr_se += f.r_diag[a] / c * sig[a][0].trace();
            if a + 1 < nb {
                tr_se += 2.0 * f.r_off[a] / c * sig[a][1].trace();
            }
        }
        let hat_trace = self.m as f64 * (2.0 * q as f64 + tr_se);
        Some(SarSolution { lambda, coef, hat_trace })
    }

    fn dense(&self, lambda: f64, c: f64) -> Result<SarSolution> {
        let q = self.m * self.p;
        let nl = self.grid.len();
        let omega = self.basis.omega();
        let mut a = DMatrix::zeros(nl * q, nl * q);
        for k in 0..nl {
            a.view_mut((k * q, k * q), (q, q)).copy_from(&self.gram[k]);
            for j in 0..nl {
                for i in 0..q {
                    a[(k * q + i, j * q + i)] += c * omega[(k, j)];
                }
            }
        }
        let mut rhs = DMatrix::zeros(nl * q, self.m);
        for k in 0..nl {
            rhs.view_mut((k * q, 0), (q, self.m)).copy_from(&self.cross[k].transpose());
        }
        let chol = a.cholesky().ok_or_else(|| {
            Error::Singular(format!("penalised normal equations not positive definite at λ = {lambda:e}"))
        })?;
        let x = chol.solve(&rhs);
        let coef = (0..nl).map(|k| x.rows(k * q, q).transpose()).collect();
        let inv = chol.inverse();
        let tr: f64 = (0..nl)
            .map(|k| (inv.view((k * q, k * q), (q, q)) * &self.gram[k]).trace())
            .sum();
        Ok(SarSolution {
            lambda,
            coef,
            hat_trace: self.m as f64 * tr,
        })
    }

    /// Max-abs residual of `Θ̂(ΣZ_ℓZ_ℓᵀ + (n−p)λD) − ΣY_ℓZ_ℓᵀ`, with the
    /// largest entry of the same expression taken in absolute values.
    pub fn normal_equation_residual(&self, sol: &SarSolution) -> (f64, f64) {
        self.residual_of(sol)
    }

    fn residual_of(&self, sol: &SarSolution) -> (f64, f64) {
        let c = self.n_eff as f64 * sol.lambda;
        let omega = self.basis.omega();
        let nl = self.grid.len();
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        // The scale sums the magnitudes of the terms, so that heavy
        // penalties, whose term nearly cancels on smooth coefficients, are
        // judged against the size of what was added up.
        for k in 0..nl {
            let fit = &sol.coef[k] * &self.gram[k];
            let mut size = sol.coef[k].abs() * self.gram[k].abs() + self.cross[k].abs();
            let mut pen = DMatrix::zeros(self.m, self.m * self.p);
            for j in 0..nl {
                if omega[(k, j)] != 0.0 {
                    pen += &sol.coef[j] * (c * omega[(k, j)]);
                    size += sol.coef[j].abs() * (c * omega[(k, j)].abs());
                }
            }
            let r = &fit + &pen - &self.cross[k];
            res = res.max(r.amax());
            scale = scale.max(size.amax());
        }
        (res, scale)
    }

    /// Per-level residual covariances `Ṽ(α_ℓ)`.
    pub fn residual_covariances(&self, sol: &SarSolution) -> Vec<DMatrix<f64>> {
        (0..self.grid.len())
            .map(|k| {
                let a = &sol.coef[k];
                let af = a * self.cross[k].transpose();
                let v = &self.outer[k] - &af - af.transpose() + a * &self.gram[k] * a.transpose();
                let v = v / self.n_eff as f64;
                (&v + v.transpose()) * 0.5
            })
            .collect()
    }

    /// `(L(n−p))⁻¹ Σ_ℓ ‖Y_ℓ − Θ̂Z_ℓ‖²`.
    pub fn mean_squared_residual(&self, sol: &SarSolution) -> f64 {
        let v = self.residual_covariances(sol);
        v.iter().map(|m| m.trace()).sum::<f64>() / v.len() as f64
    }

    /// The generalized cross-validation score, `+∞` when the effective
    /// degrees of freedom leave nothing for the residuals.
    pub fn gcv(&self, sol: &SarSolution) -> f64 {
        let denom = 1.0 - sol.hat_trace / (self.grid.len() * self.n_eff) as f64;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        self.mean_squared_residual(sol) / (denom * denom)
    }
}

/// Block `LDLᵀ` factorisation of a symmetric block-pentadiagonal matrix.
struct BandLdl {
    /// `low[i] = [L_{i,i−1}, L_{i,i−2}]` (zero-sized when out of range).
    low: Vec<[DMatrix<f64>; 2]>,
    dinv: Vec<DMatrix<f64>>,
}

impl BandLdl {
    fn new(s: &[[DMatrix<f64>; 3]]) -> Option<Self> {
        let nb = s.len();
        let q = s.first().map_or(0, |b| b[0].nrows());
        let mut low: Vec<[DMatrix<f64>; 2]> = (0..nb)
            .map(|_| std::array::from_fn(|_| DMatrix::zeros(q, q)))
            .collect();
        let mut d: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut dinv: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for j in 0..nb {
            let mut dj = s[j][0].clone();
            for back in 1..=2 {
                if j >= back {
                    let l = &low[j][back - 1];
                    dj -= l * &d[j - back] * l.transpose();
                }
            }
            let dj = (&dj + dj.transpose()) * 0.5;
            let chol: Cholesky<f64, Dyn> = dj.clone().cholesky()?;
            let inv = chol.inverse();
            for i in j + 1..=(j + 2).min(nb - 1) {
                // S_{i,j} = S_{j,i}ᵀ and the blocks are symmetric.
                let mut mij = s[j][i - j].transpose();
                for k in i.saturating_sub(2)..j {
                    mij -= &low[i][i - k - 1] * &d[k] * low[j][j - k - 1].transpose();
                }
                low[i][i - j - 1] = mij * &inv;
            }
            d.push(dj);
            dinv.push(inv);
        }
        Some(Self { low, dinv })
    }

    fn solve(&self, mut t: Vec<DMatrix<f64>>) -> Vec<DMatrix<f64>> {
        let nb = t.len();
        for i in 0..nb {
            for back in 1..=2.min(i) {
                let prev = t[i - back].clone();
                t[i] -= &self.low[i][back - 1] * prev;
            }
        }
        for i in 0..nb {
            t[i] = &self.dinv[i] * &t[i];
        }
        for i in (0..nb).rev() {
            for ahead in 1..=2 {
                if i + ahead < nb {
                    let next = t[i + ahead].clone();
                    t[i] -= self.low[i + ahead][ahead - 1].transpose() * next;
                }
            }
        }
        t
    }

    /// Band of the inverse: `sig[i][d] = (S⁻¹)_{i, i+d}` for `d ≤ 2`.
    fn selected_inverse(&self) -> Vec<[DMatrix<f64>; 3]> {
        let nb = self.dinv.len();
        let q = self.dinv.first().map_or(0, |m| m.nrows());
        let mut sig: Vec<[DMatrix<f64>; 3]> = (0..nb)
            .map(|_| std::array::from_fn(|_| DMatrix::zeros(q, q)))
            .collect();
        // (S⁻¹)_{ij} = δ_ij D_i⁻¹ − Σ_{k>i} L_kiᵀ (S⁻¹)_{kj}, for i ≤ j.
        for i in (0..nb).rev() {
            let get = |sig: &Vec<[DMatrix<f64>; 3]>, r: usize, c: usize| -> DMatrix<f64> {
                if r <= c {
                    sig[r][c - r].clone()
                } else {
                    sig[c][r - c].transpose()
                }
            };
            for j in (i..=(i + 2).min(nb - 1)).rev() {
                let mut acc = if i == j { self.dinv[i].clone() } else { DMatrix::zeros(q, q) };
                for k in i + 1..=(i + 2).min(nb - 1) {
                    acc -= self.low[k][k - i - 1].transpose() * get(&sig, k, j);
                }
                if i == j {
                    acc = (&acc + acc.transpose()) * 0.5;
                }
                sig[i][j - i] = acc;
            }
        }
        sig
    }
}

/// A fitted spline autoregression.
#[derive(Debug, Clone)]
pub struct SarModel {
    p: usize,
    m: usize,
    grid: QuantileGrid,
    basis: Arc<SplineBasis>,
    theta: DMatrix<f64>,
    lambda: f64,
    spar: f64,
    ratio: f64,
    vtilde: Vec<DMatrix<f64>>,
    vhat: Vec<SmoothedCurve>,
    hat_trace: f64,
    gcv: f64,
}

impl SarModel {
    /// Assemble a model from a solution of `system`, smoothing the residual
    /// covariances with the same penalty.
    pub fn from_solution(system: &SarSystem, sol: SarSolution) -> Result<Self> {
        let (m, p) = (system.m, system.p);
        let nl = system.grid.len();
        let km = nl * m;
        let mut theta = DMatrix::zeros(m, km * p);
        for (k, a) in sol.coef.iter().enumerate() {
            for tau in 0..p {
                theta
                    .view_mut((0, tau * km + k * m), (m, m))
                    .copy_from(&a.view((0, tau * m), (m, m)));
            }
        }
        let vtilde = system.residual_covariances(&sol);
        let mut vhat = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                let src = if k >= j { (j, k) } else { (k, j) };
                let values: Vec<f64> = vtilde.iter().map(|v| v[src]).collect();
                vhat.push(smooth_scalar(&values, sol.lambda, &system.basis)?);
            }
        }
        Ok(Self {
            p,
            m,
            grid: system.grid.clone(),
            basis: Arc::clone(&system.basis),
            theta,
            lambda: sol.lambda,
            spar: lambda_to_spar(sol.lambda, system.ratio),
            ratio: system.ratio,
            vtilde,
            vhat,
            hat_trace: sol.hat_trace,
            gcv: system.gcv(&sol),
        })
    }

    /// Rebuild a model from its stored parts. The residual covariance curves
    /// are smoothed again from `vtilde`, which reproduces them exactly.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        p: usize,
        grid: QuantileGrid,
        theta: DMatrix<f64>,
        lambda: f64,
        ratio: f64,
        vtilde: Vec<DMatrix<f64>>,
        hat_trace: f64,
        gcv: f64,
    ) -> Result<Self> {
        let m = theta.nrows();
        let nl = grid.len();
        if p == 0 || theta.ncols() != nl * m * p || vtilde.len() != nl || vtilde.iter().any(|v| v.shape() != (m, m)) {
            return Err(Error::Format("SAR model parts have inconsistent dimensions".into()));
        }
        let basis = Arc::new(SplineBasis::new(grid.levels())?);
        let mut vhat = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                let src = if k >= j { (j, k) } else { (k, j) };
                let values: Vec<f64> = vtilde.iter().map(|v| v[src]).collect();
                vhat.push(smooth_scalar(&values, lambda, &basis)?);
            }
        }
        Ok(Self {
            p,
            m,
            grid,
            basis,
            theta,
            lambda,
            spar: lambda_to_spar(lambda, ratio),
            ratio,
            vtilde,
            vhat,
            hat_trace,
            gcv,
        })
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    /// `Θ = [Θ_1, …, Θ_p]`, `m × Kmp`; column `τ·Km + k·m + j` (zero-based)
    /// multiplies `φ_k(α)` times channel `j` at lag `τ + 1`.
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spar(&self) -> f64 {
        self.spar
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn hat_trace(&self) -> f64 {
        self.hat_trace
    }

    pub fn gcv(&self) -> f64 {
        self.gcv
    }

    /// Unsmoothed residual covariance at each grid level.
    pub fn level_residual_covariances(&self) -> &[DMatrix<f64>] {
        &self.vtilde
    }

    /// Smoothed residual covariance curves, row-major `m × m`.
    pub fn vhat_curves(&self) -> &[SmoothedCurve] {
        &self.vhat
    }

    /// `Â_τ(α)` for lags `τ = 1..=p`.
    pub fn coefficients_at(&self, alpha: f64) -> Vec<DMatrix<f64>> {
        let phi = self.basis.evaluate(alpha);
        let km = self.basis.len() * self.m;
        (0..self.p)
            .map(|tau| {
                let mut a = DMatrix::zeros(self.m, self.m);
                for (k, w) in phi.iter().enumerate() {
                    if *w != 0.0 {
                        a += self.theta.view((0, tau * km + k * self.m), (self.m, self.m)) * *w;
                    }
                }
                a
            })
            .collect()
    }

    /// `V̂(α)`, symmetrized and floored to be positive definite.
    pub fn residual_covariance(&self, alpha: f64) -> DMatrix<f64> {
        let v = DMatrix::from_fn(self.m, self.m, |j, k| self.vhat[j * self.m + k].evaluate(alpha));
        clip_psd_real(&v, PSD_FLOOR)
    }

    /// Residual series `y_t(α_ℓ) − Σ Â_τ(α_ℓ) y_{t−τ}(α_ℓ)`, `t = p+1..n`,
    /// per grid level, each `m × (n − p)`.
    pub fn residuals(&self, qs: &QuantileSeries) -> Result<Vec<DMatrix<f64>>> {
        if qs.grid() != &self.grid || qs.m() != self.m {
            return Err(Error::GridMismatch("quantile series does not match the model".into()));
        }
        let (n, m, p) = (qs.n(), self.m, self.p);
        Ok((0..self.grid.len())
            .map(|l| {
                let y = qs.demeaned_level(l);
                let a = self.coefficients_at(self.grid.levels()[l]);
                DMatrix::from_fn(m, n - p, |j, c| {
                    let t = c + p;
                    let mut e = y[j][t];
                    for (tau, at) in a.iter().enumerate() {
                        for k in 0..m {
                            e -= at[(j, k)] * y[k][t - tau - 1];
                        }
                    }
                    e
                })
            })
            .collect())
    }
}

/// Fit a SAR(p) model at penalty `lambda`.
pub fn fit_sar(qs: &QuantileSeries, p: usize, lambda: f64, basis: &Arc<SplineBasis>) -> Result<SarModel> {
    let system = SarSystem::new(qs, p, Arc::clone(basis))?;
    let sol = system.solve(lambda)?;
    SarModel::from_solution(&system, sol)
}

/// `Ŝ(ω, α) = (I − Â(ω, α))⁻¹ V̂(α) (I − Â(ω, α))⁻ᴴ` on a frequency × level grid.
pub fn sar_spectrum(model: &SarModel, freqs: &[f64], grid: &QuantileGrid) -> Result<SpectrumField> {
    let columns: Vec<Vec<DMatrix<num_complex::Complex64>>> = grid
        .levels()
        .par_iter()
        .map(|&alpha| {
            let a = model.coefficients_at(alpha);
            let v = model.residual_covariance(alpha);
            freqs
                .iter()
                .map(|&w| {
                    transfer_spectrum(&a, &v, w).map_err(|e| e.context(format!("SAR spectrum at α = {alpha}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = SpectrumField::zeros(model.m, freqs.to_vec(), grid.clone());
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
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn series(n: usize, nl: usize, seed: u64) -> QuantileSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = QuantileGrid::range(0.1, 0.1 + 0.1 * (nl - 1) as f64, 0.1).unwrap();
        let mut y = Vec::new();
        for _ in 0..2 {
            for l in 0..nl {
                let phi = 0.2 + 0.05 * l as f64;
                let mut prev = 0.0;
                for _ in 0..n {
                    prev = phi * prev + rng.sample::<f64, _>(StandardNormal);
                    y.push(prev);
                }
            }
        }
        // `from_series` wants channel-major blocks of levels.
        QuantileSeries::from_series(n, 2, grid, y).unwrap()
    }

    #[test]
    fn structured_and_dense_solves_agree() {
        let qs = series(120, 7, 3);
        let basis = Arc::new(SplineBasis::new(qs.grid().levels()).unwrap());
        let sys = SarSystem::new(&qs, 3, basis).unwrap();
        for spar in [0.0, 0.4, 0.9, 1.4] {
            let lambda = sys.lambda_for_spar(spar);
            let c = sys.n_eff as f64 * lambda;
            let fast = sys.structured(lambda, c).unwrap();
            let slow = sys.dense(lambda, c).unwrap();
            for sol in [&fast, &slow] {
                let (res, scale) = sys.normal_equation_residual(sol);
                assert!(res < 1e-12 * scale, "spar {spar}: {res} vs {scale}");
            }
            for (a, b) in fast.coef.iter().zip(&slow.coef) {
                assert!((a - b).amax() < 1e-7 * b.amax(), "spar {spar}");
            }
            assert!((fast.hat_trace - slow.hat_trace).abs() < 1e-8 * slow.hat_trace, "spar {spar}");
        }
    }

    #[test]
    fn no_penalty_fits_each_level() {
        let qs = series(100, 5, 8);
        let basis = Arc::new(SplineBasis::new(qs.grid().levels()).unwrap());
        let sys = SarSystem::new(&qs, 2, basis).unwrap();
        let sol = sys.solve(0.0).unwrap();
        assert_eq!(sol.hat_trace, (2 * 5 * 4) as f64);
        let (res, scale) = sys.normal_equation_residual(&sol);
        assert!(res < 1e-12 * scale);
    }

    #[test]
    fn knots_must_match_grid() {
        let qs = series(50, 5, 1);
        let basis = Arc::new(SplineBasis::new(&[0.1, 0.2, 0.3, 0.4, 0.55]).unwrap());
        assert!(SarSystem::new(&qs, 1, basis).is_err());
    }
}
