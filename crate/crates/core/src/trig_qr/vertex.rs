//! Exterior-point vertex descent for `min_β Σ ρ_α(y_i − x_iᵀβ)`.
//!
//! A basic solution is determined by `p` observations `h` that it
//! interpolates: `β = X_h⁻¹ y_h`. From a vertex, the `2p` edge directions
//! `±X_h⁻¹ e_k` each free one basic observation. The directional derivative of
//! the objective along an edge is piecewise constant, and along the best
//! descending edge a weighted-median line search finds the breakpoint where
//! a new observation enters the basis.
//!
//! The solver is monomorphised on the column count, which keeps the inner
//! loops free of bounds checks for the 1- to 3-column trigonometric designs.

use super::CheckLoss;

const MAX_PIVOTS: usize = 200;

pub(super) struct Outcome {
    pub beta: Vec<f64>,
    pub basis: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug)]
pub(super) enum Failure {
    IterationLimit,
    Singular,
}

type Mat<const P: usize> = [[f64; P]; P];

struct State<'a, const P: usize> {
    rows: &'a [[f64; P]],
    y: &'a [f64],
    loss: CheckLoss,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    beta: [f64; P],
    resid: Vec<f64>,
    zero_tol: f64,
    x_max: f64,
    zeros: Vec<usize>,
    cands: Vec<(f64, f64, usize)>,
}

pub(super) fn solve<const P: usize>(
    x: &[f64],
    y: &[f64],
    loss: CheckLoss,
    warm: Option<&[usize]>,
) -> Result<Outcome, Failure> {
    let (rows, rest) = x.as_chunks::<P>();
    debug_assert!(rest.is_empty() && rows.len() == y.len());
    let n = rows.len();
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut st = State {
        rows,
        y,
        loss,
        basis: Vec::with_capacity(P),
        in_basis: vec![false; n],
        beta: [0.0; P],
        resid: y.to_vec(),
        zero_tol: 1e-11 * scale,
        x_max: x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        zeros: Vec::new(),
        cands: Vec::with_capacity(n),
    };
    let mut iterations = 0;
    let warmed = match warm {
        Some(h) if h.len() == P && h.iter().all(|&i| i < n) => st.set_basis(h),
        _ => false,
    };
    if !warmed {
        st.basis.clear();
        st.in_basis.iter_mut().for_each(|b| *b = false);
        iterations += st.phase_one()?;
    }
    iterations += st.phase_two()?;
    Ok(Outcome {
        beta: st.beta.to_vec(),
        basis: st.basis,
        iterations,
    })
}

#[inline(always)]
fn dot<const P: usize>(a: &[f64; P], b: &[f64; P]) -> f64 {
    let mut s = 0.0;
    for c in 0..P {
        s += a[c] * b[c];
    }
    s
}

impl<const P: usize> State<'_, P> {
    fn refresh_residuals(&mut self) {
        for ((r, row), &yi) in self.resid.iter_mut().zip(self.rows).zip(self.y) {
            *r = yi - dot(row, &self.beta);
        }
        for &h in &self.basis {
            self.resid[h] = 0.0;
        }
    }

    /// Install a full basis; false if it is singular or repeats an index.
    fn set_basis(&mut self, h: &[usize]) -> bool {
        self.in_basis.iter_mut().for_each(|b| *b = false);
        for &i in h {
            if self.in_basis[i] {
                return false;
            }
            self.in_basis[i] = true;
        }
        self.basis.clear();
        self.basis.extend_from_slice(h);
        self.basis_inverse().is_some()
    }

    fn basis_inverse(&self) -> Option<Mat<P>> {
        let mut m = [[0.0; P]; P];
        for (r, &h) in self.basis.iter().enumerate() {
            m[r] = self.rows[h];
        }
        invert_fixed(&m)
    }

    fn solve_on_basis(&self, inv: &Mat<P>) -> [f64; P] {
        let mut beta = [0.0; P];
        for (r, b) in beta.iter_mut().enumerate() {
            for c in 0..P {
                *b += inv[r][c] * self.y[self.basis[c]];
            }
        }
        beta
    }

    /// Directional derivatives along `+d` and `−d` restricted to non-basic
    /// observations.
    fn slopes(&self, d: &[f64; P]) -> (f64, f64) {
        let alpha = self.loss.alpha();
        let (mut plus, mut minus) = (0.0, 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            if self.in_basis[i] {
                continue;
            }
            let a = dot(row, d);
            let r = self.resid[i];
            if r.abs() <= self.zero_tol {
                plus += self.loss.eval(-a);
                minus += self.loss.eval(a);
            } else {
                let w = if r < 0.0 { alpha - 1.0 } else { alpha };
                plus -= a * w;
                minus += a * w;
            }
        }
        (plus, minus)
    }

    /// Build a basis from scratch: at each step move within the null space of
    /// the current basic rows until a new observation is interpolated.
    fn phase_one(&mut self) -> Result<usize, Failure> {
        for _ in 0..P {
            let mut d = self.null_direction().ok_or(Failure::Singular)?;
            let (plus, minus) = self.slopes(&d);
            let slope = if plus <= minus {
                plus
            } else {
                d.iter_mut().for_each(|v| *v = -*v);
                minus
            };
            let mass: f64 = self.rows.iter().map(|r| dot(r, &d).abs()).sum();
            let (t, enter) = if slope < -1e-12 * (1.0 + mass) {
                self.line_search(&d, -slope).ok_or(Failure::Singular)?
            } else if let Some(i) = self.zero_residual_entry(&d) {
                (0.0, i)
            } else {
                self.nearest_breakpoint(&d).ok_or(Failure::Singular)?
            };
            for (b, dk) in self.beta.iter_mut().zip(&d) {
                *b += t * dk;
            }
            self.basis.push(enter);
            self.in_basis[enter] = true;
            self.refresh_residuals();
        }
        // Re-solve on the final basis to clear accumulated rounding.
        let inv = self.basis_inverse().ok_or(Failure::Singular)?;
        self.beta = self.solve_on_basis(&inv);
        self.refresh_residuals();
        Ok(P)
    }

    fn zero_residual_entry(&self, d: &[f64; P]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if self.in_basis[i] || self.resid[i].abs() > self.zero_tol {
                continue;
            }
            let m = dot(row, d).abs();
            if m > 1e-10 && best.is_none_or(|(_, bm)| m > bm) {
                best = Some((i, m));
            }
        }
        best.map(|(i, _)| i)
    }

    fn nearest_breakpoint(&self, d: &[f64; P]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = dot(row, d);
            if self.in_basis[i] || a.abs() <= 1e-14 {
                continue;
            }
            let t = self.resid[i] / a;
            if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
        best
    }

    /// A unit direction in the null space of the current basic rows, taken as
    /// the longest column of the orthogonal projector onto that null space.
    fn null_direction(&self) -> Option<[f64; P]> {
        let q = self.basis.len();
        let mut proj = [[0.0; P]; P];
        for (i, row) in proj.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        if q > 0 {
            let xh: Vec<&[f64; P]> = self.basis.iter().map(|&h| &self.rows[h]).collect();
            let mut gram = vec![0.0; q * q];
            for r in 0..q {
                for c in 0..q {
                    gram[r * q + c] = dot(xh[r], xh[c]);
                }
            }
            let ginv = invert(&gram, q)?;
            for i in 0..P {
                for j in 0..P {
                    let mut s = 0.0;
                    for r in 0..q {
                        for c in 0..q {
                            s += xh[r][i] * ginv[r * q + c] * xh[c][j];
                        }
                    }
                    proj[i][j] -= s;
                }
            }
        }
        let (j, norm) = (0..P)
            .map(|j| (j, (0..P).map(|i| proj[i][j].powi(2)).sum::<f64>().sqrt()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if norm < 1e-8 {
            return None;
        }
        let mut d = [0.0; P];
        for (i, v) in d.iter_mut().enumerate() {
            *v = proj[i][j] / norm;
        }
        Some(d)
    }

    fn phase_two(&mut self) -> Result<usize, Failure> {
        let alpha = self.loss.alpha();
        let n = self.rows.len();
        for it in 0..MAX_PIVOTS {
            let inv = self.basis_inverse().ok_or(Failure::Singular)?;
            self.beta = self.solve_on_basis(&inv);

            // Freeing basis slot k moves the fit at i by u_ik = x_iᵀ X_h⁻¹ e_k.
            // Over observations off zero the slope is linear in u, so it only
            // needs h = Σ w_i x_i; zero residuals are handled one by one.
            let mut h = [0.0; P];
            self.zeros.clear();
            for (i, (row, &yi)) in self.rows.iter().zip(self.y).enumerate() {
                let r = yi - dot(row, &self.beta);
                self.resid[i] = r;
                if self.in_basis[i] {
                    continue;
                }
                if r.abs() <= self.zero_tol {
                    self.zeros.push(i);
                    continue;
                }
                let w = if r < 0.0 { alpha - 1.0 } else { alpha };
                for c in 0..P {
                    h[c] += w * row[c];
                }
            }
            for &b in &self.basis {
                self.resid[b] = 0.0;
            }

            let mut best: Option<(usize, f64, f64)> = None;
            let mut flat: Option<(usize, f64)> = None;
            for k in 0..P {
                let col: [f64; P] = std::array::from_fn(|c| inv[c][k]);
                let g = dot(&h, &col);
                let (mut plus, mut minus) = (1.0 - alpha - g, alpha + g);
                for &i in &self.zeros {
                    let u = dot(&self.rows[i], &col);
                    plus += self.loss.eval(-u);
                    minus += self.loss.eval(u);
                }
                let size: f64 = col.iter().map(|v| v.abs()).sum();
                let tol = 1e-11 * (1.0 + n as f64 * size * self.x_max);
                for (sign, slope) in [(1.0, plus), (-1.0, minus)] {
                    if slope < -tol && best.is_none_or(|(_, _, s)| slope < s) {
                        best = Some((k, sign, slope));
                    } else if slope.abs() <= tol && flat.is_none() && lex_negative(&col, sign) {
                        flat = Some((k, sign));
                    }
                }
            }
            // At an optimum, ties are broken towards the lexicographically
            // smallest coefficient vector: walk flat edges that decrease it.
            // Off a nondegenerate vertex the flat edges may not span the
            // optimal face, so the walk is skipped there.
            let Some((k, sign, slope)) = best.or_else(|| {
                flat.filter(|_| self.zeros.is_empty()).map(|(k, s)| (k, s, 0.0))
            }) else {
                return Ok(it);
            };
            let d: [f64; P] = std::array::from_fn(|c| sign * inv[c][k]);
            let (_, enter) = self.line_search(&d, -slope).ok_or(Failure::Singular)?;
            let leave = self.basis[k];
            self.in_basis[leave] = false;
            self.in_basis[enter] = true;
            self.basis[k] = enter;
        }
        Err(Failure::IterationLimit)
    }

    /// Move along `d` (the fit at `i` changes by `t·x_iᵀd`), starting with
    /// slope `−budget`. Each nonzero residual crossing zero raises the slope
    /// by `|x_iᵀd|`; the step stops at the breakpoint where the slope turns
    /// non-negative. Returns the step length and the entering observation.
    ///
    /// Steps usually cross only a handful of breakpoints, so the scan keeps
    /// the `SHORT` nearest ones in a sorted buffer and falls back to a full
    /// selection only when their weight does not cover the budget.
    fn line_search(&mut self, d: &[f64; P], budget: f64) -> Option<(f64, usize)> {
        const SHORT: usize = 6;
        let mut near = [(f64::INFINITY, 0.0, 0usize); SHORT];
        let mut count = 0usize;
        for (i, row) in self.rows.iter().enumerate() {
            let r = self.resid[i];
            if self.in_basis[i] || r.abs() <= self.zero_tol {
                continue;
            }
            let a = dot(row, d);
            // t = r / a > 0 needs matching signs. Residual signs are random,
            // so combine the tests without short-circuiting to keep the
            // branch predictable, and divide only for keepers.
            let ahead = r * a > 0.0;
            count += ahead as usize;
            if ahead & (r.abs() < near[SHORT - 1].0 * a.abs()) {
                let t = r / a;
                let mut k = SHORT - 1;
                while k > 0 && near[k - 1].0 > t {
                    near[k] = near[k - 1];
                    k -= 1;
                }
                near[k] = (t, a.abs(), i);
            }
        }
        if count == 0 {
            return None;
        }
        let kept = count.min(SHORT);
        let mut acc = 0.0;
        for &(t, w, i) in &near[..kept] {
            acc += w;
            if acc >= budget {
                return Some((t, i));
            }
        }
        if count <= SHORT {
            return Some((near[kept - 1].0, near[kept - 1].2));
        }
        self.cands.clear();
        for (i, row) in self.rows.iter().enumerate() {
            let r = self.resid[i];
            if self.in_basis[i] || r.abs() <= self.zero_tol {
                continue;
            }
            let a = dot(row, d);
            let t = r / a;
            if t > 0.0 && t.is_finite() {
                self.cands.push((t, a.abs(), i));
            }
        }
        let idx = weighted_crossing(&mut self.cands, budget);
        Some((self.cands[idx].0, self.cands[idx].2))
    }
}

/// True if `sign · d` is lexicographically negative, ignoring entries that
/// are negligible next to the largest one.
fn lex_negative<const P: usize>(d: &[f64; P], sign: f64) -> bool {
    let big = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    d.iter()
        .find(|v| v.abs() > 1e-9 * big)
        .is_some_and(|&v| sign * v < 0.0)
}

/// Index of the smallest breakpoint at which the cumulative weight of all
/// breakpoints up to it reaches `budget` (the last one if never reached).
/// Linear expected time via quickselect-style partitioning; `cands` is
/// reordered in place.
fn weighted_crossing(cands: &mut [(f64, f64, usize)], mut budget: f64) -> usize {
    let (mut lo, mut hi) = (0usize, cands.len());
    loop {
        if hi - lo == 1 {
            return lo;
        }
        let mid = lo + (hi - lo) / 2;
        cands[lo..hi].select_nth_unstable_by(mid - lo, |x, y| x.0.total_cmp(&y.0));
        let below: f64 = cands[lo..mid].iter().map(|c| c.1).sum();
        if below >= budget {
            hi = mid;
        } else if below + cands[mid].1 >= budget {
            return mid;
        } else {
            budget -= below + cands[mid].1;
            lo = mid + 1;
            if lo == hi {
                return hi - 1;
            }
        }
    }
}

fn invert_fixed<const P: usize>(m: &Mat<P>) -> Option<Mat<P>> {
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    let inv = invert(&flat, P)?;
    Some(std::array::from_fn(|r| std::array::from_fn(|c| inv[r * P + c])))
}

/// Gauss–Jordan inverse of a small row-major matrix with partial pivoting.
pub(super) fn invert(m: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; p * p];
    for i in 0..p {
        inv[i * p + i] = 1.0;
    }
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&r, &s| a[r * p + col].abs().total_cmp(&a[s * p + col].abs()))?;
        if a[piv * p + col].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for c in 0..p {
                a.swap(piv * p + c, col * p + c);
                inv.swap(piv * p + c, col * p + c);
            }
        }
        let d = a[col * p + col];
        for c in 0..p {
            a[col * p + c] /= d;
            inv[col * p + c] /= d;
        }
        for r in 0..p {
            if r == col {
                continue;
            }
            let f = a[r * p + col];
            if f != 0.0 {
                for c in 0..p {
                    a[r * p + c] -= f * a[col * p + c];
                    inv[r * p + c] -= f * inv[col * p + c];
                }
            }
        }
    }
    Some(inv)
}
