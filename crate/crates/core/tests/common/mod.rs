//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Quantile regression as a plain linear program, solved by a generic
/// simplex code: minimise `Σ α u⁺ + (1 − α) u⁻` subject to
/// `Xβ + u⁺ − u⁻ = y`, `u± ≥ 0`, `β` free. `x` is row-major `n × p`.
///
/// When the minimiser is not unique, the lexicographically smallest `β` is
/// returned: further programs minimise `β_0`, `β_1`, … in turn while holding
/// the objective and the earlier coefficients at their optimal values.
pub fn lp_quantile_regression(x: &[f64], p: usize, y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    lp_quantile_regression_lex(x, p, y, alpha, &vec![1.0; p])
}

/// As [`lp_quantile_regression`], breaking ties by the lexicographic order of
/// `(signs[0] β_0, signs[1] β_1, …)`.
pub fn lp_quantile_regression_lex(
    x: &[f64],
    p: usize,
    y: &[f64],
    alpha: f64,
    signs: &[f64],
) -> (Vec<f64>, f64) {
    let scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>();
    let (_, best) = lp_stage(x, p, y, alpha, None, &[]);
    let mut fixed = Vec::new();
    for c in 0..p {
        let (beta, _) = lp_stage(x, p, y, alpha, Some((best + 1e-11 * scale, c, signs[c])), &fixed);
        fixed.push(beta[c]);
    }
    // The slack in the stages leaves the answer a little off the optimal
    // vertex; snap it onto the p observations it (nearly) interpolates.
    let snapped = snap_to_vertex(x, p, y, &fixed);
    match snapped {
        Some(b) if check_total(x, p, y, alpha, &b) <= best + 1e-12 * scale => (b, best),
        _ => (fixed, best),
    }
}

fn check_total(x: &[f64], p: usize, y: &[f64], alpha: f64, beta: &[f64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            let r = yi - (0..p).map(|c| x[i * p + c] * beta[c]).sum::<f64>();
            r * (alpha - if r <= 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

fn snap_to_vertex(x: &[f64], p: usize, y: &[f64], beta: &[f64]) -> Option<Vec<f64>> {
    let mut order: Vec<(f64, usize)> = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| ((yi - (0..p).map(|c| x[i * p + c] * beta[c]).sum::<f64>()).abs(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut picked: Vec<usize> = Vec::new();
    for &(_, i) in &order {
        if picked.len() == p {
            break;
        }
        let mut rows = picked.clone();
        rows.push(i);
        let m = DMatrix::from_fn(rows.len(), p, |r, c| x[rows[r] * p + c]);
        if m.rank(1e-9) == rows.len() {
            picked = rows;
        }
    }
    if picked.len() < p {
        return None;
    }
    let a = DMatrix::from_fn(p, p, |r, c| x[picked[r] * p + c]);
    let b = DVector::from_iterator(p, picked.iter().map(|&i| y[i]));
    a.lu().solve(&b).map(|v| v.iter().copied().collect())
}

fn lp_stage(
    x: &[f64],
    p: usize,
    y: &[f64],
    alpha: f64,
    lex: Option<(f64, usize, f64)>,
    fixed: &[f64],
) -> (Vec<f64>, f64) {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let beta: Vec<_> = (0..p)
        .map(|c| {
            let obj = match lex {
                Some((_, k, sign)) if k == c => sign,
                _ => 0.0,
            };
            let bounds = match fixed.get(c) {
                Some(&b) => (b - 1e-9 * (1.0 + b.abs()), b + 1e-9 * (1.0 + b.abs())),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            };
            lp.add_var(obj, bounds)
        })
        .collect();
    let check_weight = if lex.is_some() { 0.0 } else { 1.0 };
    let mut loss = Vec::new();
    for (i, &yi) in y.iter().enumerate() {
        let up = lp.add_var(check_weight * alpha, (0.0, f64::INFINITY));
        let um = lp.add_var(check_weight * (1.0 - alpha), (0.0, f64::INFINITY));
        let mut terms: Vec<_> = (0..p).map(|c| (beta[c], x[i * p + c])).collect();
        terms.push((up, 1.0));
        terms.push((um, -1.0));
        lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, yi);
        loss.push((up, alpha));
        loss.push((um, 1.0 - alpha));
    }
    if let Some((cap, _, _)) = lex {
        lp.add_constraint(loss.as_slice(), ComparisonOp::Le, cap);
    }
    let sol = lp.solve().expect("LP solve");
    let objective = loss.iter().map(|&(v, w)| w * sol[v]).sum();
    (beta.iter().map(|&b| sol[b]).collect(), objective)
}

/// Trigonometric design at Fourier index `v`, computed directly from `ω t`.
pub fn direct_design(n: usize, v: usize) -> (Vec<f64>, usize) {
    let w = 2.0 * std::f64::consts::PI * v as f64 / n as f64;
    let p = if v == 0 { 1 } else if 2 * v == n { 2 } else { 3 };
    let mut x = Vec::with_capacity(n * p);
    for t in 1..=n {
        let a = w * t as f64;
        let row = [1.0, a.cos(), a.sin()];
        x.extend_from_slice(&row[..p]);
    }
    (x, p)
}

pub fn gaussian_ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = 0.0;
    (0..n + 100)
        .map(|_| {
            prev = phi * prev + rng.sample::<f64, _>(StandardNormal);
            prev
        })
        .skip(100)
        .collect()
}
