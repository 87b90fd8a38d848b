//! Trigonometric quantile regression.
//!
//! For a real series `y_1, …, y_n`, a frequency `ω` and a quantile level `α`,
//! this module solves
//!
//! ```text
//! β̂(ω, α) = argmin_β Σ_t ρ_α(y_t − x_t(ω)ᵀ β),      ρ_α(u) = u (α − 1{u ≤ 0})
//! ```
//!
//! with the trigonometric regressor `x_t(0) = [1]`, `x_t(π) = [1, cos πt]`
//! and `x_t(ω) = [1, cos ωt, sin ωt]` otherwise. These fits are the building
//! blocks of the quantile DFT (see [`crate::qdft`]).
//!
//! The default engine is an exterior-point vertex descent (a simplex method
//! specialised to the check loss). It walks between basic solutions, i.e.
//! coefficient vectors that interpolate `p` observations, and stops when the
//! subgradient optimality condition holds. Because successive quantile levels
//! share the same design, a fit can be warm-started from the basis of the
//! previous level, which typically needs zero to three pivots. A primal-dual
//! Frisch–Newton interior-point solver is kept as a fallback and for
//! cross-checking.

mod ipm;
mod vertex;

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// The check (pinball) loss `ρ_α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckLoss {
    alpha: f64,
}

impl CheckLoss {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn eval(&self, residual: f64) -> f64 {
        if residual <= 0.0 {
            residual * (self.alpha - 1.0)
        } else {
            residual * self.alpha
        }
    }

    /// Total loss of a residual vector.
    pub fn total(&self, residuals: impl IntoIterator<Item = f64>) -> f64 {
        residuals.into_iter().map(|r| self.eval(r)).sum()
    }
}

/// `ρ_α(residual)`.
pub fn check_loss(residual: f64, alpha: f64) -> Result<f64> {
    Ok(CheckLoss::new(alpha)?.eval(residual))
}

/// Which of the three regressor shapes a frequency selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `ω = 0`: intercept only.
    Zero,
    /// `ω = π`: intercept and `cos(πt)`.
    Nyquist,
    /// Intercept, cosine and sine.
    General,
}

impl Branch {
    pub fn columns(self) -> usize {
        match self {
            Branch::Zero => 1,
            Branch::Nyquist => 2,
            Branch::General => 3,
        }
    }
}

/// The `n × {1,2,3}` trigonometric design at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigDesign {
    n: usize,
    omega: f64,
    branch: Branch,
    // Fourier index v when ω = 2πv/n; lets cos/sin be evaluated on reduced
    // integer angles so that cos(πt) is exactly ±1.
    fourier_index: Option<usize>,
}

impl TrigDesign {
    /// Design at the Fourier frequency `ω_v = 2πv/n`. The branch is chosen on
    /// the integer index (`v == 0`, `2v == n`), never by comparing floats.
    pub fn fourier(n: usize, v: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("series length must be positive"));
        }
        if v >= n {
            return Err(Error::domain(format!(
                "Fourier index {v} out of range for n = {n}"
            )));
        }
        let branch = if v == 0 {
            Branch::Zero
        } else if 2 * v == n {
            Branch::Nyquist
        } else {
            Branch::General
        };
        Ok(Self {
            n,
            omega: 2.0 * PI * v as f64 / n as f64,
            branch,
            fourier_index: Some(v),
        })
    }

    /// Design at an arbitrary frequency in `[0, 2π)`.
    pub fn at_frequency(n: usize, omega: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("series length must be positive"));
        }
        let branch = branch_of(omega)?;
        Ok(Self {
            n,
            omega,
            branch,
            fourier_index: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn columns(&self) -> usize {
        self.branch.columns()
    }

    /// Regressor for time index `t` (1-based), padded to length 3.
    pub fn row(&self, t: usize) -> [f64; 3] {
        let (c, s) = match self.fourier_index {
            Some(v) => {
                let r = (v * t) % self.n;
                if 2 * r == self.n {
                    (-1.0, 0.0)
                } else if r == 0 {
                    (1.0, 0.0)
                } else {
                    let a = 2.0 * PI * r as f64 / self.n as f64;
                    (a.cos(), a.sin())
                }
            }
            None => {
                let a = self.omega * t as f64;
                (a.cos(), a.sin())
            }
        };
        match self.branch {
            Branch::Zero => [1.0, 0.0, 0.0],
            Branch::Nyquist => [1.0, c, 0.0],
            Branch::General => [1.0, c, s],
        }
    }

    /// Row-major `n × columns` design matrix, rows for `t = 1..=n`.
    pub fn matrix(&self) -> Vec<f64> {
        let p = self.columns();
        let mut x = Vec::with_capacity(self.n * p);
        for t in 1..=self.n {
            x.extend_from_slice(&self.row(t)[..p]);
        }
        x
    }
}

fn branch_of(omega: f64) -> Result<Branch> {
    if !(0.0..2.0 * PI).contains(&omega) {
        return Err(Error::domain(format!(
            "frequency must lie in [0, 2π), got {omega}"
        )));
    }
    Ok(if omega == 0.0 {
        Branch::Zero
    } else if omega == PI {
        Branch::Nyquist
    } else {
        Branch::General
    })
}

/// The trigonometric regressor `x_t(ω)`.
pub fn trig_regressor(t: usize, omega: f64) -> Result<Vec<f64>> {
    let branch = branch_of(omega)?;
    let a = omega * t as f64;
    Ok(match branch {
        Branch::Zero => vec![1.0],
        Branch::Nyquist => vec![1.0, (PI * t as f64).cos()],
        Branch::General => vec![1.0, a.cos(), a.sin()],
    })
}

/// Result of one quantile regression.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFit {
    pub beta: Vec<f64>,
    /// Achieved check-loss sum.
    pub objective: f64,
    pub iterations: usize,
    /// Observations interpolated by the solution (empty for interior-point fits).
    pub basis: Vec<usize>,
}

/// Sample α-quantile under the convention shared by every fit in this crate:
/// the order statistic `y_(k)` with `k = ⌈αn⌉`, i.e. the lower end of the
/// optimal interval when `αn` is an integer. `αn` within `1e-9` of an integer
/// counts as that integer, so decimal grids such as `0.35` behave as written.
pub fn sample_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    CheckLoss::new(alpha)?;
    if values.is_empty() {
        return Err(Error::domain("sample quantile of an empty sample"));
    }
    let k = quantile_rank(values.len(), alpha);
    let mut buf = values.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    Ok(*v)
}

/// Zero-based rank of the order statistic returned by [`sample_quantile`].
pub(crate) fn quantile_rank(n: usize, alpha: f64) -> usize {
    let an = alpha * n as f64;
    let nearest = an.round();
    let k = if (an - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        an.ceil() as usize
    };
    k.clamp(1, n) - 1
}

/// A quantile-regression problem with a fixed dense design, reusable across
/// response vectors and quantile levels.
#[derive(Debug, Clone)]
pub struct QuantileRegression {
    x: Vec<f64>,
    n: usize,
    p: usize,
    intercept_only: bool,
}

impl QuantileRegression {
    /// `x` is row-major `n × p`.
    pub fn new(x: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if p == 0 || x.len() != n * p {
            return Err(Error::domain(format!(
                "design has {} entries, expected {n} × {p}",
                x.len()
            )));
        }
        if n < p {
            return Err(Error::domain(format!(
                "need at least {p} observations, got {n}"
            )));
        }
        let intercept_only = p == 1 && x.iter().all(|&v| v == 1.0);
        Ok(Self {
            x,
            n,
            p,
            intercept_only,
        })
    }

    pub fn from_design(design: &TrigDesign) -> Self {
        let p = design.columns();
        Self {
            x: design.matrix(),
            n: design.n(),
            p,
            intercept_only: p == 1,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> usize {
        self.p
    }

    pub fn design(&self) -> &[f64] {
        &self.x
    }

    pub fn fit(&self, y: &[f64], alpha: f64) -> Result<QrFit> {
        self.fit_warm(y, alpha, None)
    }

    /// Fit, starting the descent from the basis of a previous fit when given.
    /// Designs with more than three columns go straight to the interior-point
    /// solver.
    pub fn fit_warm(&self, y: &[f64], alpha: f64, warm: Option<&QrFit>) -> Result<QrFit> {
        let loss = CheckLoss::new(alpha)?;
        self.check_len(y)?;
        if self.intercept_only {
            let k = quantile_rank(self.n, alpha);
            let mut idx: Vec<usize> = (0..self.n).collect();
            idx.select_nth_unstable_by(k, |&a, &b| y[a].total_cmp(&y[b]));
            let q = y[idx[k]];
            return Ok(QrFit {
                beta: vec![q],
                objective: loss.total(y.iter().map(|&v| v - q)),
                iterations: 0,
                basis: vec![idx[k]],
            });
        }
        let warm_basis = warm
            .map(|w| w.basis.as_slice())
            .filter(|b| b.len() == self.p);
        let outcome = match self.p {
            1 => vertex::solve::<1>(&self.x, y, loss, warm_basis),
            2 => vertex::solve::<2>(&self.x, y, loss, warm_basis),
            3 => vertex::solve::<3>(&self.x, y, loss, warm_basis),
            _ => return self.fit_interior_point(y, alpha),
        };
        match outcome {
            Ok(out) => {
                let objective = self.objective(y, &out.beta, loss);
                Ok(QrFit {
                    beta: out.beta,
                    objective,
                    iterations: out.iterations,
                    basis: out.basis,
                })
            }
            Err(_) => self.fit_interior_point(y, alpha),
        }
    }

    /// Frisch–Newton primal-dual interior-point fit (duality-gap tolerance
    /// `1e-8`, at most 200 iterations).
    pub fn fit_interior_point(&self, y: &[f64], alpha: f64) -> Result<QrFit> {
        let loss = CheckLoss::new(alpha)?;
        self.check_len(y)?;
        let out = ipm::solve(&self.x, self.n, self.p, y, alpha)?;
        let objective = self.objective(y, &out.beta, loss);
        Ok(QrFit {
            beta: out.beta,
            objective,
            iterations: out.iterations,
            basis: Vec::new(),
        })
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::domain(format!(
                "response has length {}, design has {} rows",
                y.len(),
                self.n
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("responses must be finite"));
        }
        Ok(())
    }

    pub fn objective(&self, y: &[f64], beta: &[f64], loss: CheckLoss) -> f64 {
        y.iter()
            .zip(self.x.chunks_exact(self.p))
            .map(|(&yi, xi)| {
                let fit: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
                loss.eval(yi - fit)
            })
            .sum()
    }
}

/// Solve the trigonometric quantile regression of `responses` on `design`.
pub fn fit_qr(responses: &[f64], design: &TrigDesign, alpha: f64) -> Result<QrFit> {
    if responses.len() < 4 {
        return Err(Error::domain(format!(
            "need at least 4 observations, got {}",
            responses.len()
        )));
    }
    if responses.len() != design.n() {
        return Err(Error::domain(format!(
            "response has length {}, design expects {}",
            responses.len(),
            design.n()
        )));
    }
    QuantileRegression::from_design(design).fit(responses, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(1.0, 0.5).unwrap(), 0.5);
        assert_eq!(check_loss(-2.0, 0.25).unwrap(), 1.5);
        assert_eq!(check_loss(0.0, 0.9).unwrap(), 0.0);
        assert!(check_loss(1.0, 0.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
        assert!(check_loss(1.0, f64::NAN).is_err());
    }

    #[test]
    fn regressor_branches() {
        assert_eq!(trig_regressor(3, 0.0).unwrap(), vec![1.0]);
        assert_eq!(trig_regressor(2, PI).unwrap(), vec![1.0, 1.0]);
        let r = trig_regressor(1, PI / 2.0).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r[1].abs() < 1e-15 && (r[2] - 1.0).abs() < 1e-15);
        assert!(trig_regressor(1, 2.0 * PI).is_err());
        assert!(trig_regressor(1, -0.1).is_err());
    }

    #[test]
    fn fourier_design_branches_by_index() {
        assert_eq!(TrigDesign::fourier(8, 0).unwrap().branch(), Branch::Zero);
        assert_eq!(TrigDesign::fourier(8, 4).unwrap().branch(), Branch::Nyquist);
        assert_eq!(TrigDesign::fourier(9, 4).unwrap().branch(), Branch::General);
        let d = TrigDesign::fourier(8, 4).unwrap();
        for t in 1..=8 {
            let expected = if t % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(d.row(t)[1], expected);
        }
        assert!(TrigDesign::fourier(8, 8).is_err());
    }

    #[test]
    fn zero_frequency_is_sample_quantile() {
        let d = TrigDesign::fourier(5, 0).unwrap();
        let fit = fit_qr(&[3.0, 1.0, 2.0, 5.0, 4.0], &d, 0.5).unwrap();
        assert_eq!(fit.beta, vec![3.0]);
        // αn integer: lower end of the optimal interval.
        let y = [4.0, 8.0, 1.0, 7.0, 2.0, 6.0, 3.0, 5.0];
        let d = TrigDesign::fourier(8, 0).unwrap();
        assert_eq!(fit_qr(&y, &d, 0.25).unwrap().beta, vec![2.0]);
        assert_eq!(sample_quantile(&y, 0.25).unwrap(), 2.0);
        assert_eq!(sample_quantile(&y, 0.3).unwrap(), 3.0);
    }

    #[test]
    fn constant_response_fits_exactly() {
        let y = vec![2.5; 16];
        let d = TrigDesign::fourier(16, 3).unwrap();
        let fit = fit_qr(&y, &d, 0.3).unwrap();
        assert!((fit.beta[0] - 2.5).abs() < 1e-12);
        assert!(fit.beta[1].abs() < 1e-12 && fit.beta[2].abs() < 1e-12);
        assert!(fit.objective.abs() < 1e-12);
    }

    #[test]
    fn vertex_matches_interior_point() {
        for (seed, v, alpha) in [(1, 4, 0.25), (2, 1, 0.5), (3, 7, 0.9), (4, 16, 0.1)] {
            let y = normals(32, seed);
            let d = TrigDesign::fourier(32, v).unwrap();
            let qr = QuantileRegression::from_design(&d);
            let a = qr.fit(&y, alpha).unwrap();
            let b = qr.fit_interior_point(&y, alpha).unwrap();
            assert!(
                (a.objective - b.objective).abs() <= 1e-7 * (1.0 + a.objective),
                "{} vs {}",
                a.objective,
                b.objective
            );
            assert!(a.objective <= b.objective + 1e-12);
        }
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let y = normals(64, 11);
        let d = TrigDesign::fourier(64, 5).unwrap();
        let qr = QuantileRegression::from_design(&d);
        let mut prev: Option<QrFit> = None;
        for l in 0..9 {
            let alpha = 0.1 + 0.1 * l as f64;
            let warm = qr.fit_warm(&y, alpha, prev.as_ref()).unwrap();
            let cold = qr.fit(&y, alpha).unwrap();
            assert!((warm.objective - cold.objective).abs() < 1e-10);
            prev = Some(warm);
        }
    }

    #[test]
    fn subgradient_certificate_holds() {
        let y = normals(48, 5);
        let d = TrigDesign::fourier(48, 9).unwrap();
        let alpha = 0.35;
        let fit = fit_qr(&y, &d, alpha).unwrap();
        let mut g = [0.0; 3];
        let mut zeros = 0usize;
        let mut max_x = 0.0f64;
        for t in 1..=48 {
            let x = d.row(t);
            let r = y[t - 1] - (x[0] * fit.beta[0] + x[1] * fit.beta[1] + x[2] * fit.beta[2]);
            max_x = max_x.max(x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            if r.abs() < 1e-10 {
                zeros += 1;
                continue;
            }
            let psi = alpha - if r < 0.0 { 1.0 } else { 0.0 };
            for c in 0..3 {
                g[c] += x[c] * psi;
            }
        }
        for gc in g {
            assert!(gc.abs() <= zeros as f64 * max_x + 1e-9);
        }
    }

    #[test]
    fn rejects_short_or_mismatched_input() {
        let d = TrigDesign::fourier(3, 1).unwrap();
        assert!(fit_qr(&[1.0, 2.0, 3.0], &d, 0.5).is_err());
        let d = TrigDesign::fourier(8, 1).unwrap();
        assert!(fit_qr(&[1.0; 7], &d, 0.5).is_err());
    }
}
