//! Frisch–Newton primal-dual interior point for the bounded dual problem
//!
//! ```text
//! max_x yᵀx   subject to   Xᵀx = (1 − α) Xᵀ1,   0 ≤ x ≤ 1,
//! ```
//!
//! with Mehrotra predictor-corrector steps. The regression coefficients are
//! the Lagrange multipliers of the equality constraint.

use super::vertex::invert;
use crate::error::{Error, Result};

const GAP_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;
const STEP: f64 = 0.99995;

pub(super) struct Outcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
}

pub(super) fn solve(x: &[f64], n: usize, p: usize, y: &[f64], alpha: f64) -> Result<Outcome> {
    let row = |i: usize| &x[i * p..(i + 1) * p];
    // Minimise cᵀx with c = −y.
    let c: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut b = vec![0.0; p];
    for i in 0..n {
        for (bk, xk) in b.iter_mut().zip(row(i)) {
            *bk += (1.0 - alpha) * xk;
        }
    }

    let mut xp = vec![1.0 - alpha; n];
    let mut s = vec![alpha; n];

    // Dual start: least-squares fit of c, split into positive and negative parts.
    let mut gram = vec![0.0; p * p];
    let mut xtc = vec![0.0; p];
    for i in 0..n {
        let xi = row(i);
        for r in 0..p {
            xtc[r] += xi[r] * c[i];
            for k in 0..p {
                gram[r * p + k] += xi[r] * xi[k];
            }
        }
    }
    let ginv = invert(&gram, p).ok_or_else(|| Error::Singular("rank-deficient design".into()))?;
    let mut yd: Vec<f64> = (0..p)
        .map(|r| (0..p).map(|k| ginv[r * p + k] * xtc[k]).sum())
        .collect();
    let resid: Vec<f64> = (0..n).map(|i| c[i] - dot(row(i), &yd)).collect();
    let shift = (resid.iter().map(|r| r.abs()).sum::<f64>() / n as f64).max(1e-8) * 0.1;
    let mut z: Vec<f64> = resid.iter().map(|&r| r.max(0.0) + shift).collect();
    let mut w: Vec<f64> = resid.iter().map(|&r| (-r).max(0.0) + shift).collect();

    let scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>();
    let mut gap = f64::INFINITY;
    let mut q = vec![0.0; n];
    let mut rtil = vec![0.0; n];
    let mut rd = vec![0.0; n];

    for it in 0..MAX_ITER {
        // Residuals of the primal equality and the dual equality.
        let mut rp = b.clone();
        for i in 0..n {
            for (rk, xk) in rp.iter_mut().zip(row(i)) {
                *rk -= xk * xp[i];
            }
        }
        for i in 0..n {
            rd[i] = c[i] - dot(row(i), &yd) - z[i] + w[i];
        }
        gap = (0..n).map(|i| xp[i] * z[i] + s[i] * w[i]).sum();
        let infeas = rp.iter().map(|v| v.abs()).sum::<f64>() + rd.iter().map(|v| v.abs()).sum::<f64>();
        if gap <= GAP_TOL * scale && infeas <= 1e-9 * scale {
            let beta = yd.iter().map(|v| -v).collect();
            return Ok(Outcome { beta, iterations: it });
        }

        for i in 0..n {
            q[i] = 1.0 / (z[i] / xp[i] + w[i] / s[i]);
        }
        let mut m = vec![0.0; p * p];
        for i in 0..n {
            let xi = row(i);
            for r in 0..p {
                for k in 0..p {
                    m[r * p + k] += q[i] * xi[r] * xi[k];
                }
            }
        }
        let minv = invert(&m, p).ok_or_else(|| Error::Singular("normal equations".into()))?;

        // Solve the Newton system for given complementarity targets.
        let newton = |rxz: &[f64], rsw: &[f64], rtil: &mut [f64]| {
            for i in 0..n {
                rtil[i] = rd[i] - rxz[i] / xp[i] + rsw[i] / s[i];
            }
            let mut rhs = rp.clone();
            for i in 0..n {
                for (rk, xk) in rhs.iter_mut().zip(row(i)) {
                    *rk += xk * q[i] * rtil[i];
                }
            }
            let dy: Vec<f64> = (0..p)
                .map(|r| (0..p).map(|k| minv[r * p + k] * rhs[k]).sum())
                .collect();
            let dx: Vec<f64> = (0..n).map(|i| q[i] * (dot(row(i), &dy) - rtil[i])).collect();
            let dz: Vec<f64> = (0..n).map(|i| (rxz[i] - z[i] * dx[i]) / xp[i]).collect();
            let dw: Vec<f64> = (0..n).map(|i| (rsw[i] + w[i] * dx[i]) / s[i]).collect();
            (dy, dx, dz, dw)
        };

        let rxz: Vec<f64> = (0..n).map(|i| -xp[i] * z[i]).collect();
        let rsw: Vec<f64> = (0..n).map(|i| -s[i] * w[i]).collect();
        let (_, dx, dz, dw) = newton(&rxz, &rsw, &mut rtil);
        let (ap, ad) = step_lengths(&xp, &s, &z, &w, &dx, &dz, &dw);
        let mu = gap / (2 * n) as f64;
        let mu_aff = (0..n)
            .map(|i| {
                (xp[i] + ap * dx[i]) * (z[i] + ad * dz[i]) + (s[i] - ap * dx[i]) * (w[i] + ad * dw[i])
            })
            .sum::<f64>()
            / (2 * n) as f64;
        let sigma = (mu_aff / mu).powi(3).min(1.0);

        let rxz: Vec<f64> = (0..n)
            .map(|i| sigma * mu - xp[i] * z[i] - dx[i] * dz[i])
            .collect();
        let rsw: Vec<f64> = (0..n)
            .map(|i| sigma * mu - s[i] * w[i] + dx[i] * dw[i])
            .collect();
        let (dy, dx, dz, dw) = newton(&rxz, &rsw, &mut rtil);
        let (ap, ad) = step_lengths(&xp, &s, &z, &w, &dx, &dz, &dw);
        for i in 0..n {
            xp[i] += ap * dx[i];
            s[i] -= ap * dx[i];
            z[i] += ad * dz[i];
            w[i] += ad * dw[i];
        }
        for (v, d) in yd.iter_mut().zip(&dy) {
            *v += ad * d;
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        gap,
    })
}

fn step_lengths(
    xp: &[f64],
    s: &[f64],
    z: &[f64],
    w: &[f64],
    dx: &[f64],
    dz: &[f64],
    dw: &[f64],
) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for i in 0..xp.len() {
        if dx[i] < 0.0 {
            ap = ap.min(-xp[i] / dx[i]);
        }
        if dx[i] > 0.0 {
            ap = ap.min(s[i] / dx[i]);
        }
        if dz[i] < 0.0 {
            ad = ad.min(-z[i] / dz[i]);
        }
        if dw[i] < 0.0 {
            ad = ad.min(-w[i] / dw[i]);
        }
    }
    ((STEP * ap).min(1.0), (STEP * ad).min(1.0))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
