//! Granger causality between channels of a spline autoregression, tested
//! with a residual bootstrap under the null that one coefficient entry
//! vanishes at every lag and level.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::{SarModel, SarSystem};
use crate::io::fmt_f64;
use crate::qdft::QuantileSeries;
use crate::sim::{stream, Domain};
use crate::trig_qr::sample_quantile;

/// Bootstrap paths exceeding this magnitude mark an explosive replicate.
const EXPLOSION: f64 = 1e8;
/// Largest tolerated share of redrawn replicates.
const MAX_REDRAW_SHARE: f64 = 0.1;
/// Relative singular-value cutoff of the covariance pseudoinverse.
const PINV_CUTOFF: f64 = 1e-10;

/// The `(effect, cause)` entry of `Â_τ(α_ℓ)` as a `p × L` matrix (row `τ − 1`).
pub fn gc_extract(model: &SarModel, effect: usize, cause: usize) -> Result<DMatrix<f64>> {
    check_pair(model.m(), effect, cause)?;
    let levels = model.grid().levels();
    let mut out = DMatrix::zeros(model.order(), levels.len());
    for (l, &alpha) in levels.iter().enumerate() {
        for (tau, a) in model.coefficients_at(alpha).iter().enumerate() {
            out[(tau, l)] = a[(effect, cause)];
        }
    }
    Ok(out)
}

fn check_pair(m: usize, effect: usize, cause: usize) -> Result<()> {
    if effect >= m || cause >= m {
        return Err(Error::domain(format!("channel index out of range for {m} channels")));
    }
    if effect == cause {
        return Err(Error::domain("cause and effect must be different channels"));
    }
    Ok(())
}

/// A fitted model, its residuals, and the entry whose absence is tested.
#[derive(Debug, Clone)]
pub struct GcHypothesis {
    pub effect: usize,
    pub cause: usize,
    pub model: SarModel,
    /// Residuals per level, each `m × (n − p)`.
    pub residuals: Vec<DMatrix<f64>>,
}

impl GcHypothesis {
    pub fn new(model: SarModel, residuals: Vec<DMatrix<f64>>, effect: usize, cause: usize) -> Result<Self> {
        check_pair(model.m(), effect, cause)?;
        let len = residuals.first().map_or(0, |r| r.ncols());
        if residuals.len() != model.grid().len()
            || len == 0
            || residuals.iter().any(|r| r.shape() != (model.m(), len))
        {
            return Err(Error::domain("need one m × (n − p) residual matrix per level"));
        }
        Ok(Self { effect, cause, model, residuals })
    }

    /// Take residuals from the quantile series the model was fitted to.
    pub fn from_fit(model: SarModel, qs: &QuantileSeries, effect: usize, cause: usize) -> Result<Self> {
        let residuals = model.residuals(qs)?;
        Self::new(model, residuals, effect, cause)
    }

    /// Length of the original series, `n`.
    pub fn series_length(&self) -> usize {
        self.residuals[0].ncols() + self.model.order()
    }

    /// `Â_τ(α_ℓ)` with the tested entry set to zero.
    fn null_coefficients(&self) -> Vec<Vec<DMatrix<f64>>> {
        self.model
            .grid()
            .levels()
            .iter()
            .map(|&alpha| {
                let mut a = self.model.coefficients_at(alpha);
                for at in &mut a {
                    at[(self.effect, self.cause)] = 0.0;
                }
                a
            })
            .collect()
    }
}

/// Bootstrap draws of the tested coefficient paths.
#[derive(Debug, Clone)]
pub struct GcBootstrap {
    /// One `p × L` path matrix per replicate.
    pub samples: Vec<DMatrix<f64>>,
    /// Explosive replicates that were discarded and drawn again.
    pub redraws: usize,
}

/// Simulate `replicates` series under the null, refit each at the model's
/// order and penalty, and collect the tested entry.
///
/// Every replicate resamples one sequence of residual time indices, shared
/// by all levels, and runs the null recursion for `n_b` steps from zero,
/// keeping the last `n`. Replicate `b` draws only from its own stream of
/// `seed`.
pub fn gc_bootstrap(h: &GcHypothesis, replicates: usize, n_b: usize, seed: u64) -> Result<GcBootstrap> {
    let n = h.series_length();
    if replicates < 2 {
        return Err(Error::domain("the bootstrap needs at least two replicates"));
    }
    if n_b <= n {
        return Err(Error::domain(format!("simulation length {n_b} must exceed the series length {n}")));
    }
    let null = h.null_coefficients();
    let basis = h.model.basis().clone();
    let lambda = h.model.lambda();
    let max_redraws = (MAX_REDRAW_SHARE * replicates as f64).floor() as usize;
    let draws: Vec<(DMatrix<f64>, usize)> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, Domain::Bootstrap, b as u64);
            let mut redraws = 0;
            loop {
                if let Some(qs) = simulate_null(h, &null, n, n_b, &mut rng)? {
                    let system = SarSystem::new(&qs, h.model.order(), basis.clone())?;
                    let sol = system.solve(lambda)?;
                    let m = h.model.m();
                    let paths = DMatrix::from_fn(h.model.order(), null.len(), |tau, k| {
                        sol.coef[k][(h.effect, tau * m + h.cause)]
                    });
                    return Ok((paths, redraws));
                }
                redraws += 1;
                if redraws > max_redraws {
                    return Err(Error::Unstable(format!(
                        "null-constrained recursion keeps exploding (replicate {})",
                        b + 1
                    )));
                }
            }
        })
        .collect::<Result<_>>()?;
    let redraws = draws.iter().map(|d| d.1).sum();
    if redraws > max_redraws {
        return Err(Error::Unstable(format!(
            "{redraws} of {replicates} bootstrap replicates exploded under the null model"
        )));
    }
    Ok(GcBootstrap {
        samples: draws.into_iter().map(|d| d.0).collect(),
        redraws,
    })
}

/// One bootstrap quantile series, or `None` if the recursion exploded.
fn simulate_null<R: Rng>(
    h: &GcHypothesis,
    null: &[Vec<DMatrix<f64>>],
    n: usize,
    n_b: usize,
    rng: &mut R,
) -> Result<Option<QuantileSeries>> {
    let m = h.model.m();
    let nl = null.len();
    let pool = h.residuals[0].ncols();
    let index: Vec<usize> = (0..n_b).map(|_| rng.random_range(0..pool)).collect();
    let mut y = vec![0.0; m * nl * n];
    let mut path = DMatrix::<f64>::zeros(m, n_b);
    for (l, a) in null.iter().enumerate() {
        let eps = &h.residuals[l];
        for t in 0..n_b {
            let mut yt: DVector<f64> = eps.column(index[t]).into_owned();
            for (tau, at) in a.iter().enumerate() {
                if t > tau {
                    yt += at * path.column(t - tau - 1);
                }
            }
            if yt.amax() > EXPLOSION || !yt.iter().all(|v| v.is_finite()) {
                return Ok(None);
            }
            path.set_column(t, &yt);
        }
        for j in 0..m {
            let dst = &mut y[(j * nl + l) * n..(j * nl + l + 1) * n];
            for (t, v) in dst.iter_mut().enumerate() {
                *v = path[(j, n_b - n + t)];
            }
        }
    }
    Ok(Some(QuantileSeries::from_series(n, m, h.model.grid().clone(), y)?))
}

/// Wald statistics against the pseudoinverse of a bootstrap covariance.
struct Wald {
    /// Rows `√(B−1)/σ_i · v_iᵀ` over the retained singular directions, so
    /// that `W(a) = ‖T a‖²`.
    t: DMatrix<f64>,
}

impl Wald {
    /// From the `B × d` matrix of bootstrap vectors.
    fn new(x: &DMatrix<f64>) -> Result<(Self, DMatrix<f64>)> {
        let b = x.nrows();
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(b, x.ncols(), |r, c| x[(r, c)] - mean[c]);
        let svd = centered.clone().svd(false, true);
        let vt = svd.v_t.expect("requested");
        let top = svd.singular_values.max();
        if !(top > 0.0) {
            return Err(Error::Degenerate("all bootstrap samples are identical".into()));
        }
        // Covariance eigenvalues are σ²/(B−1); the cutoff applies to them.
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i].powi(2) > PINV_CUTOFF * top * top)
            .collect();
        let scale = ((b - 1) as f64).sqrt();
        let t = DMatrix::from_fn(keep.len(), x.ncols(), |r, c| scale / svd.singular_values[keep[r]] * vt[(keep[r], c)]);
        Ok((Self { t }, centered))
    }

    fn stat(&self, a: &DVector<f64>) -> f64 {
        (&self.t * a).norm_squared()
    }

    /// The statistic and its bootstrap p-value: the share of centred
    /// replicate statistics at least as large.
    fn test(x: &DMatrix<f64>, observed: &DVector<f64>) -> Result<(f64, f64)> {
        let (wald, centered) = Self::new(x)?;
        let w = wald.stat(observed);
        let exceed = (0..x.nrows())
            .filter(|&r| wald.stat(&centered.row(r).transpose()) >= w)
            .count();
        Ok((w, exceed as f64 / x.nrows() as f64))
    }
}

/// Result of a bootstrap Granger-causality test.
#[derive(Debug, Clone)]
pub struct GcResult {
    pub effect: usize,
    pub cause: usize,
    pub levels: Vec<f64>,
    /// Observed paths, `p × L`.
    pub observed: DMatrix<f64>,
    pub wald: f64,
    pub p_value: f64,
    /// Statistic and p-value restricted to each lag.
    pub lag_wald: Vec<f64>,
    pub lag_p_values: Vec<f64>,
    /// Pointwise 2.5% and 97.5% bootstrap quantiles, `p × L`.
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub replicates: usize,
    pub redraws: usize,
}

/// The Wald statistic `âᵀ Σ_B† â` over all lags and levels, per-lag
/// statistics, bootstrap p-values and the pointwise band.
pub fn gc_test(observed: &DMatrix<f64>, samples: &[DMatrix<f64>]) -> Result<GcResult> {
    let b = samples.len();
    if b < 2 {
        return Err(Error::domain("the test needs at least two bootstrap samples"));
    }
    let (p, nl) = observed.shape();
    if samples.iter().any(|s| s.shape() != (p, nl)) {
        return Err(Error::domain("bootstrap samples and observed paths differ in shape"));
    }
    // Vectors are ordered (lag, level).
    let flat = |m: &DMatrix<f64>, r: std::ops::Range<usize>| -> Vec<f64> {
        r.flat_map(|tau| (0..nl).map(move |l| (tau, l))).map(|(tau, l)| m[(tau, l)]).collect()
    };
    let all = DMatrix::from_fn(b, p * nl, |r, c| samples[r][(c / nl, c % nl)]);
    let (wald, p_value) = Wald::test(&all, &DVector::from_vec(flat(observed, 0..p)))?;
    let mut lag_wald = Vec::with_capacity(p);
    let mut lag_p_values = Vec::with_capacity(p);
    for tau in 0..p {
        let x = DMatrix::from_fn(b, nl, |r, l| samples[r][(tau, l)]);
        let (w, pv) = Wald::test(&x, &DVector::from_vec(flat(observed, tau..tau + 1)))?;
        lag_wald.push(w);
        lag_p_values.push(pv);
    }
    let mut lower = DMatrix::zeros(p, nl);
    let mut upper = DMatrix::zeros(p, nl);
    let mut cell = vec![0.0; b];
    for tau in 0..p {
        for l in 0..nl {
            for (c, s) in cell.iter_mut().zip(samples) {
                *c = s[(tau, l)];
            }
            lower[(tau, l)] = sample_quantile(&cell, 0.025)?;
            upper[(tau, l)] = sample_quantile(&cell, 0.975)?;
        }
    }
    Ok(GcResult {
        effect: 0,
        cause: 0,
        levels: Vec::new(),
        observed: observed.clone(),
        wald,
        p_value,
        lag_wald,
        lag_p_values,
        lower,
        upper,
        replicates: b,
        redraws: 0,
    })
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Extra simulated steps discarded before the kept `n`.
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            burn_in: 1000,
            seed: 0,
        }
    }
}

/// Extract, bootstrap and test in one call.
pub fn granger_test(h: &GcHypothesis, config: &BootstrapConfig) -> Result<GcResult> {
    let observed = gc_extract(&h.model, h.effect, h.cause)?;
    let boot = gc_bootstrap(h, config.replicates, h.series_length() + config.burn_in, config.seed)?;
    let mut result = gc_test(&observed, &boot.samples)?;
    result.effect = h.effect;
    result.cause = h.cause;
    result.levels = h.model.grid().levels().to_vec();
    result.redraws = boot.redraws;
    Ok(result)
}

impl GcResult {
    /// JSON summary; channels are 1-based.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
        };
        json!({
            "effect": self.effect + 1,
            "cause": self.cause + 1,
            "replicates": self.replicates,
            "redraws": self.redraws,
            "wald": self.wald,
            "p_value": self.p_value,
            "lags": (1..=self.lag_wald.len()).collect::<Vec<_>>(),
            "lag_wald": self.lag_wald,
            "lag_p_values": self.lag_p_values,
            "levels": self.levels,
            "observed": rows(&self.observed),
            "lower": rows(&self.lower),
            "upper": rows(&self.upper),
        })
    }

    /// Band table `tau, alpha, observed, lower, upper`.
    pub fn write_band_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "alpha", "observed", "lower", "upper"])?;
        for tau in 0..self.observed.nrows() {
            for (l, alpha) in self.levels.iter().enumerate() {
                w.write_record([
                    (tau + 1).to_string(),
                    fmt_f64(*alpha),
                    fmt_f64(self.observed[(tau, l)]),
                    fmt_f64(self.lower[(tau, l)]),
                    fmt_f64(self.upper[(tau, l)]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
