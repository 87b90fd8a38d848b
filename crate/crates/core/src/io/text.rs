//! CSV input and output. Floating values are written with 17 significant
//! digits, so that they read back exactly.

use std::io::{Read, Write};

use csv::{ReaderBuilder, Trim, WriterBuilder};

use crate::error::{Error, Result};
use crate::qdft::{Qacf, QdftArray, QuantileSeries};
use crate::series::MultiSeries;
use crate::spectrum::SpectrumField;

/// Format a float losslessly with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Read an `n × m` numeric table. A first row that does not parse as numbers
/// is taken as channel names.
pub fn read_series_csv<R: Read>(input: R) -> Result<MultiSeries> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut names = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if i == 0 && parsed.iter().any(|p| p.is_err()) {
            names = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (c, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}, column {}: '{}' is not a finite number",
                        i + 1,
                        c + 1,
                        &record[c]
                    )))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let series = MultiSeries::from_rows(&rows)?;
    match names {
        Some(n) => series.with_names(n),
        None => Ok(series),
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    WriterBuilder::new().from_writer(out)
}

/// One row per time point, one column per channel.
pub fn write_series_csv<W: Write>(out: W, series: &MultiSeries) -> Result<()> {
    let mut w = writer(out);
    let header: Vec<String> = match series.channel_names() {
        Some(names) => names.to_vec(),
        None => (1..=series.m()).map(|j| format!("y{j}")).collect(),
    };
    w.write_record(&header)?;
    for t in 0..series.n() {
        w.write_record((0..series.m()).map(|j| fmt_f64(series.get(t, j))))?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `f, alpha, j, k, re, im` with `f = ω/2π` and 1-based channels.
pub fn write_spectrum_csv<W: Write>(out: W, s: &SpectrumField) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["f", "alpha", "j", "k", "re", "im"])?;
    let m = s.m();
    for (fi, &omega) in s.freqs().iter().enumerate() {
        let f = fmt_f64(omega / (2.0 * std::f64::consts::PI));
        for (l, &alpha) in s.grid().levels().iter().enumerate() {
            let a = fmt_f64(alpha);
            for j in 0..m {
                for k in 0..m {
                    let z = s.get(fi, l, j, k);
                    w.write_record([
                        f.clone(),
                        a.clone(),
                        (j + 1).to_string(),
                        (k + 1).to_string(),
                        fmt_f64(z.re),
                        fmt_f64(z.im),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Long format: `j, alpha, v, re, im` over all `n` Fourier indices.
pub fn write_qdft_csv<W: Write>(out: W, q: &QdftArray) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["j", "alpha", "v", "re", "im"])?;
    for j in 0..q.m() {
        for (l, &alpha) in q.grid().levels().iter().enumerate() {
            let a = fmt_f64(alpha);
            for (v, z) in q.row(j, l).iter().enumerate() {
                w.write_record([(j + 1).to_string(), a.clone(), v.to_string(), fmt_f64(z.re), fmt_f64(z.im)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per time point, one column per (channel, level) named `y{j}@{α}`.
pub fn write_qser_csv<W: Write>(out: W, qs: &QuantileSeries) -> Result<()> {
    let mut w = writer(out);
    let levels = qs.grid().levels();
    let mut header = Vec::with_capacity(qs.m() * levels.len());
    for j in 0..qs.m() {
        for &alpha in levels {
            header.push(format!("y{}@{alpha}", j + 1));
        }
    }
    w.write_record(&header)?;
    for t in 0..qs.n() {
        let mut row = Vec::with_capacity(header.len());
        for j in 0..qs.m() {
            for l in 0..levels.len() {
                row.push(fmt_f64(qs.series(j, l)[t]));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `tau, alpha, j, k, value`.
pub fn write_qacf_csv<W: Write>(out: W, a: &Qacf) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["tau", "alpha", "j", "k", "value"])?;
    for tau in 0..=a.tau_max() {
        for (l, &alpha) in a.grid().levels().iter().enumerate() {
            for j in 0..a.m() {
                for k in 0..a.m() {
                    w.write_record([
                        tau.to_string(),
                        fmt_f64(alpha),
                        (j + 1).to_string(),
                        (k + 1).to_string(),
                        fmt_f64(a.get(tau, l, j, k)),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
