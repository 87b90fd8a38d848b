use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qfa::qdft::{qdft, qper};
use qfa::series::QuantileGrid;
use qfa::sim::{
    gen_arma, gen_mixture, mc_benchmark, oracle_cached, oracle_spectrum, stream, Domain, EstimatorConfig, Process,
    VarmaSpec,
};

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn mixture_channels_are_linked_at_the_delay() {
    let y = gen_mixture(4096, 21).unwrap();
    let (y1, y2) = (y.channel(0), y.channel(1));
    // corr(y1_t, y2_{t−h})
    let scan: Vec<f64> = (0..=10).map(|h| correlation(&y1[h..], &y2[..4096 - h]).abs()).collect();
    assert!(scan[..10].iter().all(|&c| c < scan[10]), "{scan:?}");
}

fn reference_arma() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[0.816, 1.246, 0.558, 1.107]),
        DMatrix::from_row_slice(2, 2, &[0.643, 1.184, 0.307, 0.203]),
        DMatrix::from_row_slice(2, 2, &[0.0, 2.496, 0.4, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.04, -0.02, -0.02, 0.02]),
    )
}

#[test]
fn arma_model_uses_the_reference_matrices() {
    let (a1, a2, b, sigma) = reference_arma();
    let spec = VarmaSpec::arma21();
    // Stationary sign convention: y_t + A1 y_{t−1} + A2 y_{t−2} = ε_t + B ε_{t−1}.
    assert_eq!(spec.ar(), &[-a1, -a2]);
    assert_eq!(spec.ma(), &[b]);
    assert_eq!(spec.sigma(), &sigma);
}

#[test]
fn innovation_covariance_is_reproduced() {
    let (_, _, _, sigma) = reference_arma();
    let white = VarmaSpec::new(vec![], vec![], sigma.clone()).unwrap();
    let draws = 1_000_000;
    let e = white.simulate(draws, &mut stream(3, Domain::Simulate, 0)).unwrap();
    let c12 = e.channel(0).iter().zip(e.channel(1)).map(|(a, b)| a * b).sum::<f64>() / draws as f64;
    let se = ((sigma[(0, 0)] * sigma[(1, 1)] + sigma[(0, 1)].powi(2)) / draws as f64).sqrt();
    assert!((c12 + 0.02).abs() < 3.0 * se, "{c12} vs -0.02 (se {se})");
}

/// `(I + A1 z + A2 z²)⁻¹ (I + B z) Σ (…)ᴴ` at `z = e^{−iω}`.
fn closed_form_spectrum(omega: f64) -> DMatrix<Complex64> {
    let (a1, a2, b, sigma) = reference_arma();
    let c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let z = Complex64::from_polar(1.0, -omega);
    let eye = DMatrix::<Complex64>::identity(2, 2);
    let phi = &eye + c(&a1) * z + c(&a2) * (z * z);
    let theta = &eye + c(&b) * z;
    let h = phi.try_inverse().unwrap() * theta;
    &h * c(&sigma) * h.adjoint()
}

#[test]
fn arma_periodogram_peaks_where_the_spectrum_does() {
    let spec = VarmaSpec::arma21();
    let n = 4096;
    let nf = (n - 1) / 2;
    let freqs: Vec<f64> = (1..=nf).map(|v| 2.0 * PI * v as f64 / n as f64).collect();
    for &w in freqs.iter().step_by(97) {
        let d = (spec.spectrum(w).unwrap() - closed_form_spectrum(w)).camax();
        assert!(d < 1e-12 * closed_form_spectrum(w).camax());
    }
    let y = gen_arma(n, 8).unwrap();
    for j in 0..2 {
        let x = y.channel(j);
        let pgram: Vec<f64> = freqs
            .iter()
            .map(|&w| {
                let s: Complex64 = x.iter().enumerate().map(|(t, &v)| Complex64::from_polar(v, -w * t as f64)).sum();
                s.norm_sqr() / n as f64
            })
            .collect();
        let half = 25;
        let smooth: Vec<f64> = (0..nf)
            .map(|v| {
                let (lo, hi) = (v.saturating_sub(half), (v + half).min(nf - 1));
                pgram[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        let truth: Vec<f64> = freqs.iter().map(|&w| closed_form_spectrum(w)[(j, j)].re).collect();
        // Compare against the spectrum averaged over the same window.
        let window: Vec<f64> = (0..nf)
            .map(|v| {
                let (lo, hi) = (v.saturating_sub(half), (v + half).min(nf - 1));
                truth[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        let ratios: Vec<f64> = smooth.iter().zip(&window).map(|(a, b)| a / b).collect();
        let mean_ratio = ratios.iter().sum::<f64>() / nf as f64;
        let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        let argmax = |s: &[f64]| (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });
        let (got, want) = (argmax(&smooth), argmax(&truth));
        let band: Vec<usize> = (0..nf).filter(|&v| truth[v] >= 0.5 * truth[want]).collect();
        assert!((mean_ratio - 1.0).abs() < 0.05, "channel {}: mean ratio {mean_ratio}", j + 1);
        assert!(worst < 0.6, "channel {}: worst ratio deviation {worst}", j + 1);
        assert!(band.contains(&got), "channel {}: peak at bin {got}, outside the half-power band", j + 1);
    }
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(gen_mixture(300, 4).unwrap(), gen_mixture(300, 4).unwrap());
    assert_eq!(gen_arma(300, 4).unwrap(), gen_arma(300, 4).unwrap());
    assert_ne!(gen_mixture(300, 4).unwrap(), gen_mixture(300, 5).unwrap());
    assert_eq!(Process::Mixture.generate(300, 4).unwrap(), gen_mixture(300, 4).unwrap());
}

#[test]
fn single_run_oracle_is_one_periodogram() {
    let grid = QuantileGrid::new(vec![0.25, 0.5, 0.75]).unwrap();
    let process = Process::arma21();
    let oracle = oracle_spectrum(&process, 96, &grid, 1, 17).unwrap();
    let y = process.generate_with(96, &mut stream(17, Domain::Oracle, 0)).unwrap();
    assert_eq!(oracle.field, qper(&qdft(&y, &grid).unwrap()));
}

#[test]
fn doubling_the_ensemble_halves_the_variance() {
    let grid = QuantileGrid::new(vec![0.3, 0.7]).unwrap();
    let process = Process::Mixture;
    let batches = 40;
    let variance = |runs: usize, offset: u64| {
        let fields: Vec<_> = (0..batches)
            .map(|b| oracle_spectrum(&process, 64, &grid, runs, offset + b).unwrap().field)
            .collect();
        let cells = fields[0].values().len();
        (0..cells)
            .map(|c| {
                let xs: Vec<f64> = fields.iter().map(|f| f.values()[c].re).collect();
                let mean = xs.iter().sum::<f64>() / batches as f64;
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64
            })
            .sum::<f64>()
            / cells as f64
    };
    let ratio = variance(4, 0) / variance(8, 1_000);
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "variance ratio {ratio}");
}

#[test]
fn mixture_oracle_has_the_narrow_peak_in_channel_two() {
    let n = 512;
    let grid = QuantileGrid::new(vec![0.1]).unwrap();
    let oracle = oracle_spectrum(&Process::Mixture, n, &grid, 100, 1).unwrap().field;
    let nf = oracle.freqs().len();
    let peak = (0..nf).fold(0, |b, f| if oracle.get(f, 0, 1, 1).re > oracle.get(b, 0, 1, 1).re { f } else { b });
    let bin = peak + 1;
    assert!((bin as f64 - 0.2 * n as f64).abs() <= 2.0, "peak at bin {bin}");
}

#[test]
fn oracles_are_cached_by_their_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let grid = QuantileGrid::new(vec![0.4, 0.6]).unwrap();
    let first = oracle_cached(&Process::Mixture, 64, &grid, 3, 2, dir.path()).unwrap();
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let again = oracle_cached(&Process::Mixture, 64, &grid, 3, 2, dir.path()).unwrap();
    assert_eq!(first.field, again.field);
    oracle_cached(&Process::Mixture, 64, &grid, 4, 2, dir.path()).unwrap();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn benchmark_records_failures_and_shares_draws() {
    let grid = QuantileGrid::new(vec![0.3, 0.5, 0.7]).unwrap();
    let process = Process::arma21();
    let truth = oracle_spectrum(&process, 64, &grid, 8, 1).unwrap().field;
    let estimators: Vec<EstimatorConfig> = ["ar@2", "ar@40", "lw:5"].iter().map(|s| s.parse().unwrap()).collect();
    let rows = mc_benchmark(&process, 64, &grid, &estimators, 5, 9, &truth).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].failures.is_empty() && rows[0].klds.iter().all(Option::is_some));
    assert_eq!(rows[1].failures.len(), 5);
    assert!(rows[1].klds.iter().all(Option::is_none));
    assert!(rows[2].mean_kld > 0.0 && rows[2].se > 0.0);

    let alone = mc_benchmark(&process, 64, &grid, &estimators[2..], 5, 9, &truth).unwrap();
    assert_eq!(alone[0].klds, rows[2].klds);
    let other_grid = QuantileGrid::new(vec![0.5]).unwrap();
    assert!(mc_benchmark(&process, 64, &other_grid, &estimators, 5, 9, &truth).is_err());
}
