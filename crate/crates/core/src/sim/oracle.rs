use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use super::{stream, Domain, Process};
use crate::error::{Error, Result};
use crate::io::{read_spectrum, write_container, Container};
use crate::qdft::{qdft, qper};
use crate::series::QuantileGrid;
use crate::spectrum::SpectrumField;

/// Replicates computed together before being added to the running sum.
const BATCH: usize = 32;

/// `α_ℓ = 0.1 + 0.01(ℓ − 1)`, `ℓ = 1..=81`.
pub fn default_grid() -> QuantileGrid {
    QuantileGrid::new((0..81).map(|l| (10 + l) as f64 / 100.0).collect()).expect("valid grid")
}

/// The ensemble-mean quantile periodogram of a process.
#[derive(Debug, Clone)]
pub struct OracleSpectrum {
    pub field: SpectrumField,
    pub runs: usize,
    pub process: Process,
    pub seed: u64,
}

/// Average `runs` independent quantile periodograms of length-`n` draws.
///
/// Replicate `r` uses its own stream, and the running sum is taken in
/// replicate order, so the result does not depend on the thread count.
pub fn oracle_spectrum(process: &Process, n: usize, grid: &QuantileGrid, runs: usize, seed: u64) -> Result<OracleSpectrum> {
    if runs == 0 {
        return Err(Error::domain("the oracle needs at least one run"));
    }
    let mut sum: Option<SpectrumField> = None;
    for start in (0..runs).step_by(BATCH) {
        let batch: Vec<SpectrumField> = (start..(start + BATCH).min(runs))
            .into_par_iter()
            .map(|r| {
                let y = process.generate_with(n, &mut stream(seed, Domain::Oracle, r as u64))?;
                Ok(qper(&qdft(&y, grid)?))
            })
            .collect::<Result<_>>()?;
        for field in batch {
            match &mut sum {
                None => sum = Some(field),
                Some(acc) => {
                    for (a, b) in acc.cells_mut().flatten().zip(field.values()) {
                        *a += b;
                    }
                }
            }
        }
    }
    let mut field = sum.expect("at least one run");
    let inv = Complex64::new(1.0 / runs as f64, 0.0);
    field.cells_mut().flatten().for_each(|v| *v *= inv);
    Ok(OracleSpectrum {
        field,
        runs,
        process: process.clone(),
        seed,
    })
}

/// The cache file for an oracle with these parameters.
fn cache_path(dir: &Path, process: &Process, n: usize, grid: &QuantileGrid, runs: usize, seed: u64) -> PathBuf {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in grid.levels() {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    dir.join(format!("oracle-{}-n{n}-grid{h:016x}-R{runs}-seed{seed}.qfa", process.key()))
}

/// [`oracle_spectrum`], reusing a copy stored in `dir` when one exists.
pub fn oracle_cached(
    process: &Process,
    n: usize,
    grid: &QuantileGrid,
    runs: usize,
    seed: u64,
    dir: &Path,
) -> Result<OracleSpectrum> {
    let path = cache_path(dir, process, n, grid, runs, seed);
    if let Ok(field) = read_spectrum(&path) {
        if field.grid() == grid && field.freqs().len() == (n - 1) / 2 {
            return Ok(OracleSpectrum {
                field,
                runs,
                process: process.clone(),
                seed,
            });
        }
    }
    let oracle = oracle_spectrum(process, n, grid, runs, seed)?;
    std::fs::create_dir_all(dir)?;
    // Write then rename, so an interrupted run never leaves a partial file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_container(&tmp, &Container::Spectrum(oracle.field.clone()))?;
    std::fs::rename(&tmp, &path)?;
    Ok(oracle)
}
