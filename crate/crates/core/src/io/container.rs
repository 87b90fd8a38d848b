//! The `QFAC` binary container.
//!
//! Every file starts with the same little-endian header:
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `QFAC` |
//! | 4 | `u32` format version, currently 1 |
//! | 4 | `u32` kind (below) |
//! | 8 | `u64` length `n` |
//! | 8 | `u64` channels `m` |
//! | 8 | `u64` levels `L` |
//! | 8·L | quantile levels, `f64` |
//!
//! followed by a kind-specific payload of `f64` values (complex values as
//! `re, im` pairs), all in row-major order:
//!
//! | kind | contents | `n` means | payload |
//! |---|---|---|---|
//! | 1 | QDFT | series length | `z[j, ℓ, v]` complex |
//! | 2 | quantile series | series length | `y[j, ℓ, t]`, then `mean[j, ℓ]` |
//! | 3 | quantile ACF | largest lag | `Γ[τ, ℓ, j, k]` |
//! | 4 | spectrum | number of frequencies | angular frequencies, then `S[f, ℓ, j, k]` complex |
//! | 5 | SAR model | order `p` | `λ, r, tr(H), GCV`, then `Θ` (`m × Lmp`), then `Ṽ[ℓ, j, k]` |

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimators::SarModel;
use crate::qdft::{Qacf, QdftArray, QuantileSeries};
use crate::series::QuantileGrid;
use crate::spectrum::SpectrumField;

const MAGIC: &[u8; 4] = b"QFAC";
const VERSION: u32 = 1;

/// Any object that can be stored in a container file.
#[derive(Debug, Clone)]
pub enum Container {
    Qdft(QdftArray),
    Qser(QuantileSeries),
    Qacf(Qacf),
    Spectrum(SpectrumField),
    Sar(SarModel),
}

impl Container {
    pub fn kind(&self) -> u32 {
        match self {
            Container::Qdft(_) => 1,
            Container::Qser(_) => 2,
            Container::Qacf(_) => 3,
            Container::Spectrum(_) => 4,
            Container::Sar(_) => 5,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        kind_name(self.kind())
    }
}

fn kind_name(kind: u32) -> &'static str {
    match kind {
        1 => "QDFT",
        2 => "quantile series",
        3 => "quantile ACF",
        4 => "spectrum",
        5 => "SAR model",
        _ => "unknown",
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn complex<'a>(&mut self, vs: impl IntoIterator<Item = &'a Complex64>) {
        for v in vs {
            self.f64s([&v.re, &v.im]);
        }
    }

    fn header(&mut self, kind: u32, n: usize, m: usize, grid: &QuantileGrid) {
        self.0.extend_from_slice(MAGIC);
        self.u32(VERSION);
        self.u32(kind);
        self.u64(n);
        self.u64(m);
        self.u64(grid.len());
        self.f64s(grid.levels());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("container truncated at byte {} (needed {len} more)", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("size field {v} too large")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        let (chunks, _) = bytes.as_chunks::<8>();
        Ok(chunks.iter().map(|c| f64::from_le_bytes(*c)).collect())
    }

    fn complex(&mut self, count: usize) -> Result<Vec<Complex64>> {
        let raw = self.f64s(count.checked_mul(2).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        let (pairs, _) = raw.as_chunks::<2>();
        Ok(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
    }
}

/// Serialize to bytes.
pub fn encode(item: &Container) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match item {
        Container::Qdft(q) => {
            w.header(1, q.n(), q.m(), q.grid());
            w.complex(q.values());
        }
        Container::Qser(qs) => {
            w.header(2, qs.n(), qs.m(), qs.grid());
            w.f64s(qs.values());
            w.f64s(qs.means());
        }
        Container::Qacf(a) => {
            w.header(3, a.tau_max(), a.m(), a.grid());
            w.f64s(a.values());
        }
        Container::Spectrum(s) => {
            w.header(4, s.freqs().len(), s.m(), s.grid());
            w.f64s(s.freqs());
            w.complex(s.values());
        }
        Container::Sar(model) => {
            w.header(5, model.order(), model.m(), model.grid());
            w.f64s(&[model.lambda(), model.ratio(), model.hat_trace(), model.gcv()]);
            let theta = model.theta();
            for r in 0..theta.nrows() {
                w.f64s(theta.row(r).iter());
            }
            for v in model.level_residual_covariances() {
                for r in 0..v.nrows() {
                    w.f64s(v.row(r).iter());
                }
            }
        }
    }
    w.0
}

/// Parse bytes written by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<Container> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a QFAC container (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let kind = r.u32()?;
    let (n, m, nl) = (r.u64()?, r.u64()?, r.u64()?);
    let grid = QuantileGrid::new(r.f64s(nl)?)?;
    let size = |dims: &[usize]| {
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&s| s <= bytes.len())
            .ok_or_else(|| Error::Format("container dimensions exceed the file size".into()))
    };
    let item = match kind {
        1 => Container::Qdft(QdftArray::from_values(n, m, grid, r.complex(size(&[m, nl, n])?)?)?),
        2 => {
            let y = r.f64s(size(&[m, nl, n])?)?;
            let means = r.f64s(size(&[m, nl])?)?;
            Container::Qser(QuantileSeries::from_parts(n, m, grid, y, means)?)
        }
        3 => Container::Qacf(Qacf::from_values(m, n, grid, r.f64s(size(&[n + 1, nl, m, m])?)?)?),
        4 => {
            let freqs = r.f64s(size(&[n])?)?;
            let values = r.complex(size(&[n, nl, m, m])?)?;
            Container::Spectrum(SpectrumField::from_values(m, freqs, grid, values)?)
        }
        5 => {
            let head = r.f64s(4)?;
            let cols = size(&[nl, m, n])?;
            let theta = DMatrix::from_row_slice(m, cols, &r.f64s(size(&[m, cols])?)?);
            let vtilde = (0..nl)
                .map(|_| Ok(DMatrix::from_row_slice(m, m, &r.f64s(size(&[m, m])?)?)))
                .collect::<Result<Vec<_>>>()?;
            Container::Sar(SarModel::from_parts(n, grid, theta, head[0], head[1], vtilde, head[2], head[3])?)
        }
        other => return Err(Error::Format(format!("unknown container kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after a {} container",
            bytes.len() - r.pos,
            kind_name(kind)
        )));
    }
    Ok(item)
}

pub fn write_container(path: impl AsRef<Path>, item: &Container) -> Result<()> {
    std::fs::write(path, encode(item))?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| e.context(path.display().to_string()))
}

/// Read a container that must hold a spectrum.
pub fn read_spectrum(path: impl AsRef<Path>) -> Result<SpectrumField> {
    match read_container(&path)? {
        Container::Spectrum(s) => Ok(s),
        other => Err(Error::Format(format!(
            "{} holds a {}, expected a spectrum",
            path.as_ref().display(),
            other.kind_name()
        ))),
    }
}
