use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{stream, Domain};
use crate::error::{Error, Result};
use crate::series::MultiSeries;

/// Steps simulated and discarded before the first returned observation.
pub const BURN_IN: usize = 500;

/// Delay of the second mixture channel behind the AR(2) component.
const DELAY: usize = 10;

/// `0.9` below `−0.8`, `0.2` above `0.8`, linear in between.
pub fn psi1(y: f64) -> f64 {
    if y < -0.8 {
        0.9
    } else if y > 0.8 {
        0.2
    } else {
        0.9 - 7.0 / 16.0 * (y + 0.8)
    }
}

/// `0.5` below `−0.4`, `1` above `0.4`, linear in between.
pub fn psi2(y: f64) -> f64 {
    if y < -0.4 {
        0.5
    } else if y > 0.4 {
        1.0
    } else {
        0.5 + 5.0 / 8.0 * (y + 0.4)
    }
}

/// A VARMA model `y_t = Σ Φ_τ y_{t−τ} + ε_t + Σ Θ_τ ε_{t−τ}` with Gaussian
/// innovations of covariance `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarmaSpec {
    ar: Vec<DMatrix<f64>>,
    ma: Vec<DMatrix<f64>>,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl VarmaSpec {
    pub fn new(ar: Vec<DMatrix<f64>>, ma: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let m = sigma.nrows();
        if m == 0 || !sigma.is_square() || ar.iter().chain(&ma).any(|a| a.shape() != (m, m)) {
            return Err(Error::domain("VARMA matrices must all be m × m"));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("innovation covariance must be positive definite"))?
            .l();
        Ok(Self { ar, ma, sigma, chol })
    }

    /// The bivariate ARMA(2,1) benchmark.
    ///
    /// The model is `y_t + A₁y_{t−1} + A₂y_{t−2} = ε_t + Bε_{t−1}`. With the
    /// opposite sign on the AR terms these matrices would give an explosive
    /// recursion (spectral radius ≈ 2.26).
    pub fn arma21() -> Self {
        let a1 = DMatrix::from_row_slice(2, 2, &[0.816, 1.246, 0.558, 1.107]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.643, 1.184, 0.307, 0.203]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 2.496, 0.4, 0.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.04, -0.02, -0.02, 0.02]);
        Self::new(vec![-a1, -a2], vec![b], sigma).expect("benchmark model is valid")
    }

    pub fn m(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn ar(&self) -> &[DMatrix<f64>] {
        &self.ar
    }

    pub fn ma(&self) -> &[DMatrix<f64>] {
        &self.ma
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Run the recursion from zero initial values over the given innovation
    /// columns; column `t` of the result is `y_t`.
    pub fn filter(&self, eps: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, len) = eps.shape();
        let mut y = DMatrix::zeros(m, len);
        for t in 0..len {
            let mut yt = eps.column(t).into_owned();
            for (tau, a) in self.ar.iter().enumerate() {
                if t > tau {
                    yt += a * y.column(t - tau - 1);
                }
            }
            for (tau, b) in self.ma.iter().enumerate() {
                if t > tau {
                    yt += b * eps.column(t - tau - 1);
                }
            }
            y.set_column(t, &yt);
        }
        y
    }

    /// `n` observations after the burn-in.
    pub fn simulate<R: Rng>(&self, n: usize, rng: &mut R) -> Result<MultiSeries> {
        let m = self.m();
        let len = BURN_IN + n;
        let mut eps = DMatrix::zeros(m, len);
        for t in 0..len {
            let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            eps.set_column(t, &(&self.chol * z));
        }
        let y = self.filter(&eps);
        let channels = (0..m)
            .map(|j| y.row(j).columns(BURN_IN, n).iter().copied().collect())
            .collect();
        MultiSeries::from_channels(channels)
    }

    /// The ordinary spectral density matrix
    /// `H(ω) Σ H(ω)ᴴ` with `H(ω) = Φ(e^{−iω})⁻¹ Θ(e^{−iω})`.
    pub fn spectrum(&self, omega: f64) -> Result<DMatrix<num_complex::Complex64>> {
        use num_complex::Complex64;
        let m = self.m();
        let poly = |coef: &[DMatrix<f64>], sign: f64| {
            let mut out = DMatrix::<Complex64>::identity(m, m);
            for (tau, c) in coef.iter().enumerate() {
                let e = Complex64::from_polar(sign, -omega * (tau + 1) as f64);
                out += c.map(|x| e * x);
            }
            out
        };
        let phi = poly(&self.ar, -1.0);
        let theta = poly(&self.ma, 1.0);
        let inv = phi
            .try_inverse()
            .ok_or_else(|| Error::Unstable(format!("AR polynomial singular at ω = {omega}")))?;
        let h = inv * theta;
        Ok(&h * self.sigma.map(|x| Complex64::new(x, 0.0)) * h.adjoint())
    }
}

/// The processes the simulator can draw from.
#[derive(Debug, Clone, PartialEq)]
pub enum Process {
    /// The bivariate nonlinear mixture of three AR components.
    Mixture,
    Varma(VarmaSpec),
}

impl Process {
    pub fn arma21() -> Self {
        Process::Varma(VarmaSpec::arma21())
    }

    pub fn m(&self) -> usize {
        match self {
            Process::Mixture => 2,
            Process::Varma(spec) => spec.m(),
        }
    }

    /// `n` observations drawn from `rng`.
    pub fn generate_with<R: Rng>(&self, n: usize, rng: &mut R) -> Result<MultiSeries> {
        if n < 64 {
            return Err(Error::domain(format!("simulated series need n ≥ 64, got {n}")));
        }
        match self {
            Process::Mixture => mixture_with(n, rng),
            Process::Varma(spec) => spec.simulate(n, rng),
        }
    }

    /// `n` observations from the simulation stream of `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<MultiSeries> {
        self.generate_with(n, &mut stream(seed, Domain::Simulate, 0))
    }

    /// A stable identifier, used to key cached oracles.
    pub fn key(&self) -> String {
        match self {
            Process::Mixture => "mixture".into(),
            Process::Varma(spec) if *spec == VarmaSpec::arma21() => "arma21".into(),
            Process::Varma(spec) => {
                // FNV-1a over the coefficient bits.
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                let mut eat = |x: f64| {
                    for b in x.to_bits().to_le_bytes() {
                        h ^= b as u64;
                        h = h.wrapping_mul(0x0100_0000_01b3);
                    }
                };
                eat(spec.ar.len() as f64);
                eat(spec.ma.len() as f64);
                spec.ar.iter().chain(&spec.ma).chain([&spec.sigma]).flat_map(|a| a.iter()).for_each(|&x| eat(x));
                format!("varma-{h:016x}")
            }
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixture" => Ok(Process::Mixture),
            "arma" | "arma21" => Ok(Process::arma21()),
            other => Err(Error::domain(format!("unknown process '{other}' (expected mixture or arma21)"))),
        }
    }
}

/// Innovation variance giving an AR(1) with coefficient `a` unit variance.
fn ar1_noise_var(a: f64) -> f64 {
    1.0 - a * a
}

/// Innovation variance giving a stationary AR(2) unit variance.
fn ar2_noise_var(a1: f64, a2: f64) -> f64 {
    (1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1) / (1.0 - a2)
}

/// The three unit-variance AR components, started from zero.
fn components<R: Rng>(len: usize, rng: &mut R) -> [Vec<f64>; 3] {
    let (a11, a21) = (0.8, -0.7);
    let (d, f0) = (0.9f64, 0.2f64);
    let a31 = 2.0 * d * (2.0 * std::f64::consts::PI * f0).cos();
    let a32 = -d * d;
    let s1 = ar1_noise_var(a11).sqrt();
    let s2 = ar1_noise_var(a21).sqrt();
    let s3 = ar2_noise_var(a31, a32).sqrt();

    let mut x1 = vec![0.0; len];
    let mut x2 = vec![0.0; len];
    let mut x3 = vec![0.0; len];
    for t in 0..len {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let e3: f64 = rng.sample(StandardNormal);
        let (p1, p2, p3, p4) = match t {
            0 => (0.0, 0.0, 0.0, 0.0),
            1 => (x1[0], x2[0], x3[0], 0.0),
            _ => (x1[t - 1], x2[t - 1], x3[t - 1], x3[t - 2]),
        };
        x1[t] = a11 * p1 + s1 * e1;
        x2[t] = a21 * p2 + s2 * e2;
        x3[t] = a31 * p3 + a32 * p4 + s3 * e3;
    }
    [x1, x2, x3]
}

fn mixture_with<R: Rng>(n: usize, rng: &mut R) -> Result<MultiSeries> {
    let [x1, x2, x3] = components(BURN_IN + n + DELAY, rng);
    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for t in BURN_IN..BURN_IN + n {
        let w1 = psi1(x1[t]);
        let z = w1 * x1[t] + (1.0 - w1) * x2[t];
        let w2 = psi2(z);
        y1.push(w2 * z + (1.0 - w2) * x3[t]);
        y2.push(x3[t + DELAY]);
    }
    MultiSeries::from_channels(vec![y1, y2])
}

/// The two-channel nonlinear mixture process, seeded.
pub fn gen_mixture(n: usize, seed: u64) -> Result<MultiSeries> {
    Process::Mixture.generate(n, seed)
}

/// The two-channel ARMA(2,1) process, seeded.
pub fn gen_arma(n: usize, seed: u64) -> Result<MultiSeries> {
    Process::arma21().generate(n, seed)
}
