//! Order selection by average AIC and penalty selection by GCV.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::sar::{SarModel, SarSystem};
use crate::error::{Error, Result};
use crate::qdft::QuantileSeries;
use crate::spline::SplineBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub order: usize,
    /// Average AIC across levels for `p = 0..=p_max`.
    pub mean_aic: Vec<f64>,
}

/// Choose the VAR order minimising the level-averaged AIC.
///
/// Every order is fitted by least squares on the same `n − p_max` time
/// points, and `AIC_p = log det Ṽ_p + 2pm²/(n − p_max)`. Ties go to the
/// smaller order.
pub fn select_order(qs: &QuantileSeries, p_max: usize) -> Result<OrderSelection> {
    let (n, m) = (qs.n(), qs.m());
    if 4 * p_max >= n {
        return Err(Error::domain(format!("maximum order {p_max} must be below n/4 = {}", n / 4)));
    }
    let count = n - p_max;
    let q = m * p_max;
    let per_level: Vec<Vec<f64>> = (0..qs.grid().len())
        .into_par_iter()
        .map(|l| {
            let y = qs.demeaned_level(l);
            let z = DMatrix::from_fn(q, count, |r, c| y[r % m][c + p_max - 1 - r / m]);
            let resp = DMatrix::from_fn(m, count, |j, c| y[j][c + p_max]);
            let gzz = &z * z.transpose();
            let gyz = &resp * z.transpose();
            let gyy = &resp * resp.transpose();
            (0..=p_max)
                .map(|p| {
                    let k = p * m;
                    let rss = if p == 0 {
                        gyy.clone()
                    } else {
                        let g = gzz.view((0, 0), (k, k)).into_owned();
                        let f = gyz.columns(0, k).into_owned();
                        match g.cholesky() {
                            Some(ch) => &gyy - &f * ch.solve(&f.transpose()),
                            None => return f64::INFINITY,
                        }
                    };
                    let v = (&rss + rss.transpose()) * (0.5 / count as f64);
                    match v.cholesky() {
                        Some(ch) => {
                            let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                            logdet + 2.0 * (p * m * m) as f64 / count as f64
                        }
                        None => f64::INFINITY,
                    }
                })
                .collect()
        })
        .collect();
    let nl = per_level.len() as f64;
    let mean_aic: Vec<f64> = (0..=p_max)
        .map(|p| per_level.iter().map(|a| a[p]).sum::<f64>() / nl)
        .collect();
    let mut order = 0;
    for (p, &a) in mean_aic.iter().enumerate() {
        if a < mean_aic[order] {
            order = p;
        }
    }
    if !mean_aic[order].is_finite() {
        return Err(Error::Singular("every candidate order has a singular residual covariance".into()));
    }
    Ok(OrderSelection { order, mean_aic })
}

/// `0, 0.05, …, 1.5`.
pub fn default_spar_grid() -> Vec<f64> {
    (0..=30).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparSelection {
    pub spar: f64,
    pub lambda: f64,
    pub gcv: f64,
    /// `(spar, GCV)` over the search grid.
    pub curve: Vec<(f64, f64)>,
}

/// GCV at one spar, `+∞` when the fit fails.
fn gcv_at(system: &SarSystem, spar: f64) -> f64 {
    system
        .solve(system.lambda_for_spar(spar))
        .map(|s| system.gcv(&s))
        .unwrap_or(f64::INFINITY)
}

impl SarSystem {
    /// Minimise GCV over `spar_grid`, then refine by golden-section search
    /// to a width of 0.01 between the neighbours of the best grid point.
    /// Ties go to the larger spar.
    pub fn select_spar(&self, spar_grid: &[f64]) -> Result<SparSelection> {
        if spar_grid.is_empty() || spar_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("spar grid must be non-empty and increasing"));
        }
        let curve: Vec<(f64, f64)> = spar_grid.iter().map(|&s| (s, gcv_at(self, s))).collect();
        let mut best = 0;
        for (i, c) in curve.iter().enumerate() {
            if c.1 <= curve[best].1 {
                best = i;
            }
        }
        let (mut spar, mut gcv) = curve[best];
        if !gcv.is_finite() {
            return Err(Error::Singular("GCV is undefined at every spar".into()));
        }
        if curve.len() > 1 {
            let lo = curve[best.saturating_sub(1)].0;
            let hi = curve[(best + 1).min(curve.len() - 1)].0;
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (lo, hi);
            let mut c = b - g * (b - a);
            let mut d = a + g * (b - a);
            let (mut fc, mut fd) = (gcv_at(self, c), gcv_at(self, d));
            while b - a > 0.01 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = gcv_at(self, c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = gcv_at(self, d);
                }
            }
            let mid = 0.5 * (a + b);
            let fm = gcv_at(self, mid);
            if fm < gcv {
                spar = mid;
                gcv = fm;
            }
        }
        Ok(SparSelection {
            spar,
            lambda: self.lambda_for_spar(spar),
            gcv,
            curve,
        })
    }
}

/// Build the system at order `p` and select spar by GCV.
pub fn select_spar(
    qs: &QuantileSeries,
    p: usize,
    basis: &Arc<SplineBasis>,
    spar_grid: &[f64],
) -> Result<SparSelection> {
    SarSystem::new(qs, p, Arc::clone(basis))?.select_spar(spar_grid)
}

/// How the SAR order is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderChoice {
    Fixed(usize),
    Aic { max: usize },
}

/// How the SAR penalty is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoothing {
    Spar(f64),
    Lambda(f64),
    Gcv(Vec<f64>),
}

/// A SAR model with the record of how it was selected.
#[derive(Debug, Clone)]
pub struct SarFit {
    pub model: SarModel,
    pub order: Option<OrderSelection>,
    pub spar: Option<SparSelection>,
}

/// Select the order and penalty as requested and fit the model.
pub fn fit_sar_auto(
    qs: &QuantileSeries,
    order: OrderChoice,
    smoothing: &Smoothing,
    basis: &Arc<SplineBasis>,
) -> Result<SarFit> {
    let (p, order_sel) = match order {
        OrderChoice::Fixed(p) => (p, None),
        OrderChoice::Aic { max } => {
            let sel = select_order(qs, max)?;
            (sel.order.max(1), Some(sel))
        }
    };
    let system = SarSystem::new(qs, p, Arc::clone(basis))?;
    let (lambda, spar_sel) = match smoothing {
        Smoothing::Spar(s) => (system.lambda_for_spar(*s), None),
        Smoothing::Lambda(l) => (*l, None),
        Smoothing::Gcv(grid) => {
            let sel = system.select_spar(grid)?;
            (sel.lambda, Some(sel))
        }
    };
    let model = SarModel::from_solution(&system, system.solve(lambda)?)?;
    Ok(SarFit {
        model,
        order: order_sel,
        spar: spar_sel,
    })
}
