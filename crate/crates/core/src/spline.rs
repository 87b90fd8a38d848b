//! Natural cubic smoothing splines on the quantile grid.
//!
//! The basis is cardinal: `φ_k` is the natural cubic spline through the
//! knots that equals 1 at knot `k` and 0 at the others. Coefficients are
//! therefore the curve's values at the knots, `B = I`, and the roughness
//! penalty `Ω = ∫ φ̈ φ̈ᵀ` has the closed form `Q R⁻¹ Qᵀ` of the
//! value/second-derivative representation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::series::QuantileGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
    /// Maps knot values to knot second derivatives (zero rows at both ends).
    curvature: DMatrix<f64>,
    omega: DMatrix<f64>,
    omega_eigen: Vec<f64>,
    factors: PenaltyFactors,
}

/// Banded factors of the penalty, `Ω = Q R⁻¹ Qᵀ`. Column `a` of the
/// `L × (L−2)` matrix `Q` is nonzero only in rows `a, a+1, a+2`; `R` is
/// tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PenaltyFactors {
    pub q: Vec<[f64; 3]>,
    pub r_diag: Vec<f64>,
    pub r_off: Vec<f64>,
}

/// Natural cubic spline basis with a knot at every grid level. Smoothing
/// needs a nondegenerate penalty, so at least 4 levels are required.
pub fn build_basis(grid: &QuantileGrid) -> Result<SplineBasis> {
    let l = grid.len();
    if l < 4 {
        return Err(Error::domain(format!(
            "a smoothing basis needs at least 4 quantile levels, got {l}"
        )));
    }
    SplineBasis::new(grid.levels())
}

impl SplineBasis {
    /// Cardinal natural cubic spline basis on `knots`. One knot gives the
    /// constant function and two give straight lines; below three knots the
    /// penalty is zero.
    pub fn new(knots: &[f64]) -> Result<Self> {
        let l = knots.len();
        if l == 0 {
            return Err(Error::domain("a spline basis needs at least one knot"));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("spline knots must be finite and strictly increasing"));
        }
        if l < 3 {
            return Ok(Self {
                knots: knots.to_vec(),
                curvature: DMatrix::zeros(l, l),
                omega: DMatrix::zeros(l, l),
                omega_eigen: vec![0.0; l],
                factors: PenaltyFactors {
                    q: Vec::new(),
                    r_diag: Vec::new(),
                    r_off: Vec::new(),
                },
            });
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let factors = PenaltyFactors {
            q: (0..l - 2)
                .map(|c| [1.0 / h[c], -1.0 / h[c] - 1.0 / h[c + 1], 1.0 / h[c + 1]])
                .collect(),
            r_diag: (0..l - 2).map(|c| (h[c] + h[c + 1]) / 3.0).collect(),
            r_off: (0..l.saturating_sub(3)).map(|c| h[c + 1] / 6.0).collect(),
        };
        let mut q = DMatrix::zeros(l, l - 2);
        let mut r = DMatrix::zeros(l - 2, l - 2);
        for c in 0..l - 2 {
            for (d, v) in factors.q[c].iter().enumerate() {
                q[(c + d, c)] = *v;
            }
            r[(c, c)] = factors.r_diag[c];
            if c + 1 < l - 2 {
                r[(c, c + 1)] = factors.r_off[c];
                r[(c + 1, c)] = factors.r_off[c];
            }
        }
        let inner = r
            .cholesky()
            .ok_or_else(|| Error::Singular("spline band matrix".into()))?
            .solve(&q.transpose());
        let mut curvature = DMatrix::zeros(l, l);
        curvature.rows_mut(1, l - 2).copy_from(&inner);
        let omega = &q * &inner;
        let omega = (&omega + omega.transpose()) * 0.5;
        // The null space (linear functions) is known exactly; round-off there
        // would otherwise be amplified by large penalties.
        let eig = omega.clone().symmetric_eigenvalues();
        let floor = 1e-10 * eig.amax();
        let omega_eigen = eig.iter().map(|&e| if e < floor { 0.0 } else { e }).collect();
        Ok(Self {
            knots: knots.to_vec(),
            curvature,
            omega,
            omega_eigen,
            factors,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions `K` (equal to the number of knots).
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// `B`, the basis evaluated at the knots. The identity for this basis.
    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::identity(self.len(), self.len())
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub(crate) fn factors(&self) -> &PenaltyFactors {
        &self.factors
    }

    fn interval(&self, a: f64) -> usize {
        let l = self.len();
        self.knots.partition_point(|&k| k <= a).clamp(1, l - 1) - 1
    }

    /// `φ(α)`. Beyond the end knots the natural spline continues linearly.
    pub fn evaluate(&self, a: f64) -> Vec<f64> {
        let l = self.len();
        if l == 1 {
            return vec![1.0];
        }
        let t = &self.knots;
        let mut out = vec![0.0; l];
        let m = &self.curvature;
        if a < t[0] || a > t[l - 1] {
            // g(t_e) + (α − t_e) g'(t_e), with g' from the end interval.
            let (i, e) = if a < t[0] { (0, 0) } else { (l - 2, l - 1) };
            let h = t[i + 1] - t[i];
            let d = a - t[e];
            out[e] += 1.0;
            out[i] -= d / h;
            out[i + 1] += d / h;
            // Only the interior end of the interval carries curvature.
            let (c, w) = if e == 0 { (i + 1, -1.0) } else { (i, 1.0) };
            for k in 0..l {
                out[k] += d * w * h / 6.0 * m[(c, k)];
            }
            return out;
        }
        let i = self.interval(a);
        let h = t[i + 1] - t[i];
        let (u, v) = (a - t[i], t[i + 1] - a);
        out[i] += v / h;
        out[i + 1] += u / h;
        let c = u * v / 6.0;
        let (wi, wj) = (c * (1.0 + v / h), c * (1.0 + u / h));
        for k in 0..l {
            out[k] -= wi * m[(i, k)] + wj * m[(i + 1, k)];
        }
        out
    }

    /// `φ̈(α)`: piecewise linear, zero at and beyond the end knots.
    pub fn second_derivative(&self, a: f64) -> Vec<f64> {
        let l = self.len();
        let t = &self.knots;
        if l < 3 || a <= t[0] || a >= t[l - 1] {
            return vec![0.0; l];
        }
        let i = self.interval(a);
        let h = t[i + 1] - t[i];
        let (wi, wj) = ((t[i + 1] - a) / h, (a - t[i]) / h);
        (0..l)
            .map(|k| wi * self.curvature[(i, k)] + wj * self.curvature[(i + 1, k)])
            .collect()
    }

    /// The linear smoother `(BᵀB + λΩ)⁻¹ Bᵀ`.
    pub fn smoother(&self, lambda: f64) -> Result<DMatrix<f64>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("penalty must be finite and ≥ 0, got {lambda}")));
        }
        let l = self.len();
        let eye = DMatrix::identity(l, l);
        if l < 3 || lambda == 0.0 {
            return Ok(eye);
        }
        // With Ω = Q R⁻¹ Qᵀ, (I + λΩ)⁻¹ = I − λQ(R + λQᵀQ)⁻¹Qᵀ. Unlike
        // I + λΩ, the middle matrix stays well conditioned as λ grows, so
        // linear data pass through heavy penalties unchanged.
        let f = &self.factors;
        let mut q = DMatrix::zeros(l, l - 2);
        let mut r = DMatrix::zeros(l - 2, l - 2);
        for c in 0..l - 2 {
            for (d, v) in f.q[c].iter().enumerate() {
                q[(c + d, c)] = *v;
            }
            r[(c, c)] = f.r_diag[c];
            if c + 1 < l - 2 {
                r[(c, c + 1)] = f.r_off[c];
                r[(c + 1, c)] = f.r_off[c];
            }
        }
        let middle = r + q.transpose() * &q * lambda;
        let chol = middle
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("smoothing system at λ = {lambda}")))?;
        let s = eye - &q * chol.solve(&q.transpose()) * lambda;
        Ok((&s + s.transpose()) * 0.5)
    }

    /// Trace of the hat matrix `B(BᵀB + λΩ)⁻¹Bᵀ`.
    pub fn hat_trace(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("penalty must be finite and ≥ 0, got {lambda}")));
        }
        Ok(self.omega_eigen.iter().map(|e| 1.0 / (1.0 + lambda * e)).sum())
    }

    /// Eigenvalues of `Ω`, floored at zero.
    pub fn omega_eigenvalues(&self) -> &[f64] {
        &self.omega_eigen
    }
}

/// A curve `φᵀ(·) ξ` in a shared basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurve {
    xi: Vec<f64>,
    basis: Arc<SplineBasis>,
}

impl SmoothedCurve {
    pub fn new(xi: Vec<f64>, basis: Arc<SplineBasis>) -> Result<Self> {
        if xi.len() != basis.len() {
            return Err(Error::domain(format!(
                "{} coefficients for a basis of size {}",
                xi.len(),
                basis.len()
            )));
        }
        Ok(Self { xi, basis })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    pub fn evaluate(&self, a: f64) -> f64 {
        self.basis.evaluate(a).iter().zip(&self.xi).map(|(p, x)| p * x).sum()
    }
}

/// Penalised least-squares fit `ξ = (BᵀB + λΩ)⁻¹ Bᵀ values`.
pub fn smooth_scalar(values: &[f64], lambda: f64, basis: &Arc<SplineBasis>) -> Result<SmoothedCurve> {
    if values.len() != basis.len() {
        return Err(Error::domain(format!(
            "{} values for {} knots",
            values.len(),
            basis.len()
        )));
    }
    let s = basis.smoother(lambda)?;
    let xi = &s * DVector::from_column_slice(values);
    SmoothedCurve::new(xi.iter().copied().collect(), Arc::clone(basis))
}

/// `λ = r · 256^(3·spar − 1)`.
pub fn spar_to_lambda(spar: f64, r: f64) -> f64 {
    r * 256f64.powf(3.0 * spar - 1.0)
}

/// Inverse of [`spar_to_lambda`].
pub fn lambda_to_spar(lambda: f64, r: f64) -> f64 {
    ((lambda / r).ln() / 256f64.ln() + 1.0) / 3.0
}
