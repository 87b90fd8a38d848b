use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{kld, stream, Domain, Process};
use crate::error::{Error, Result};
use crate::estimators::{
    ar_estimate, default_spar_grid, fit_sar_auto, lw_estimate, sar_spectrum, select_order, OrderChoice, Smoothing,
    Window,
};
use crate::qdft::{qacf, qdft, qser, QuantileSeries};
use crate::series::QuantileGrid;
use crate::spectrum::SpectrumField;
use crate::spline::SplineBasis;

/// A spectral estimator together with its tuning rule.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorConfig {
    Sar { order: OrderChoice, smoothing: Smoothing },
    Ar { order: OrderChoice },
    Lw { bandwidth: usize, window: Window },
}

impl fmt::Display for EstimatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = |o: &OrderChoice| match o {
            OrderChoice::Fixed(p) => format!("@{p}"),
            OrderChoice::Aic { max } => format!("@aic{max}"),
        };
        match self {
            EstimatorConfig::Sar { order: o, smoothing } => {
                let s = match smoothing {
                    Smoothing::Gcv(_) => "gcv".to_string(),
                    Smoothing::Spar(s) => s.to_string(),
                    Smoothing::Lambda(l) => format!("lambda={l}"),
                };
                write!(f, "sar:{s}{}", order(o))
            }
            EstimatorConfig::Ar { order: o } => write!(f, "ar{}", order(o)),
            EstimatorConfig::Lw { bandwidth, .. } => write!(f, "lw:{bandwidth}"),
        }
    }
}

impl FromStr for EstimatorConfig {
    type Err = Error;

    /// `sar:gcv`, `sar:0.9`, `sar:lambda=1e-3`, `ar`, `lw:30`, with an
    /// optional order suffix `@10` or `@aic15` for `sar` and `ar`
    /// (default `@10`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("cannot parse estimator '{s}'"));
        let lower = s.trim().to_ascii_lowercase();
        let (body, order) = match lower.split_once('@') {
            Some((b, o)) => (b, parse_order(o).ok_or_else(bad)?),
            None => (lower.as_str(), OrderChoice::Fixed(10)),
        };
        let (name, arg) = match body.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (body, None),
        };
        match (name, arg) {
            ("sar", Some("gcv")) | ("sar", None) => Ok(EstimatorConfig::Sar {
                order,
                smoothing: Smoothing::Gcv(default_spar_grid()),
            }),
            ("sar", Some(a)) => {
                let smoothing = match a.strip_prefix("lambda=") {
                    Some(l) => Smoothing::Lambda(l.parse().map_err(|_| bad())?),
                    None => Smoothing::Spar(a.parse().map_err(|_| bad())?),
                };
                Ok(EstimatorConfig::Sar { order, smoothing })
            }
            ("ar", None) => Ok(EstimatorConfig::Ar { order }),
            ("lw", Some(m)) => Ok(EstimatorConfig::Lw {
                bandwidth: m.parse().map_err(|_| bad())?,
                window: Window::TukeyHanning,
            }),
            _ => Err(bad()),
        }
    }
}

fn parse_order(s: &str) -> Option<OrderChoice> {
    match s.strip_prefix("aic") {
        Some(max) => Some(OrderChoice::Aic { max: max.parse().ok()? }),
        None => Some(OrderChoice::Fixed(s.parse().ok()?)),
    }
}

/// Estimate the quantile spectrum from quantile series under `config`.
pub fn estimate_spectrum(
    config: &EstimatorConfig,
    qs: &QuantileSeries,
    basis: &Arc<SplineBasis>,
    freqs: &[f64],
) -> Result<SpectrumField> {
    match config {
        EstimatorConfig::Sar { order, smoothing } => {
            let fit = fit_sar_auto(qs, *order, smoothing, basis)?;
            sar_spectrum(&fit.model, freqs, qs.grid())
        }
        EstimatorConfig::Ar { order } => {
            let p = match order {
                OrderChoice::Fixed(p) => *p,
                OrderChoice::Aic { max } => select_order(qs, *max)?.order,
            };
            ar_estimate(&qacf(qs, p)?, p, freqs)
        }
        EstimatorConfig::Lw { bandwidth, window } => lw_estimate(&qacf(qs, *bandwidth)?, *bandwidth, *window, freqs),
    }
}

/// Monte Carlo summary for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub estimator: String,
    pub n: usize,
    pub runs: usize,
    pub mean_kld: f64,
    /// Standard error of the mean over the completed runs.
    pub se: f64,
    /// Divergence per run, `None` where the estimator failed.
    pub klds: Vec<Option<f64>>,
    /// `(run, message)` for every failed run.
    pub failures: Vec<(usize, String)>,
}

/// Score each estimator against `truth` on `runs` independent draws.
///
/// All estimators see the same draws. A failed estimate excludes that run
/// from the estimator's mean and is listed in `failures`.
pub fn mc_benchmark(
    process: &Process,
    n: usize,
    grid: &QuantileGrid,
    estimators: &[EstimatorConfig],
    runs: usize,
    seed: u64,
    truth: &SpectrumField,
) -> Result<Vec<BenchmarkRow>> {
    if runs == 0 {
        return Err(Error::domain("a benchmark needs at least one run"));
    }
    if truth.grid() != grid || truth.freqs().len() != (n - 1) / 2 {
        return Err(Error::GridMismatch("the oracle was computed on a different grid".into()));
    }
    let basis = Arc::new(SplineBasis::new(grid.levels())?);
    let freqs = truth.freqs().to_vec();
    let per_run: Vec<Vec<std::result::Result<f64, String>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let y = process.generate_with(n, &mut stream(seed, Domain::Benchmark, r as u64))?;
            let qs = qser(&qdft(&y, grid)?)?;
            Ok(estimators
                .iter()
                .map(|c| {
                    estimate_spectrum(c, &qs, &basis, &freqs)
                        .and_then(|s| kld(&s, truth))
                        .map_err(|e| e.to_string())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let klds: Vec<Option<f64>> = per_run.iter().map(|r| r[i].as_ref().ok().copied()).collect();
            let failures = per_run
                .iter()
                .enumerate()
                .filter_map(|(r, row)| row[i].as_ref().err().map(|e| (r, e.clone())))
                .collect();
            let ok: Vec<f64> = klds.iter().flatten().copied().collect();
            let k = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / k;
            let var = ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
            BenchmarkRow {
                estimator: c.to_string(),
                n,
                runs,
                mean_kld: mean,
                se: (var / k).sqrt(),
                klds,
                failures,
            }
        })
        .collect())
}
