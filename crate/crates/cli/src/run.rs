use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use qfa::estimators::{
    ar_estimate, default_spar_grid, fit_sar_auto, lw_estimate, sar_spectrum, select_order, OrderChoice, SarFit,
    Smoothing, Window,
};
use qfa::granger::{granger_test, BootstrapConfig, GcHypothesis};
use qfa::io::{
    fmt_f64, read_container, read_series_csv, read_spectrum, write_container, write_qacf_csv, write_qdft_csv,
    write_qser_csv, write_series_csv, write_spectrum_csv, Container,
};
use qfa::qdft::{qacf, qdft, qper, qser, QdftArray, QuantileSeries};
use qfa::series::{fourier_frequencies, MultiSeries, QuantileGrid};
use qfa::sim::{kld, mc_benchmark, oracle_cached, oracle_spectrum, EstimatorConfig, Process};
use qfa::spline::SplineBasis;
use qfa::Error;
use serde_json::json;

use crate::args::*;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or unreadable input (exit 2).
    Input(String),
    /// The numerical machinery failed (exit 3).
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Qdft(a) => {
            let q = load_qdft(&a.input, &a.grid)?;
            emit(&a.output, Container::Qdft(q))
        }
        Command::Qser(a) => {
            let qs = load_qser(&a.input, &a.grid)?;
            emit(&a.output, Container::Qser(qs))
        }
        Command::Qacf(a) => {
            let qs = load_qser(&a.input, &a.grid)?;
            emit(&a.output, Container::Qacf(qacf(&qs, a.max_lag)?))
        }
        Command::Qper(a) => {
            let q = load_qdft(&a.input, &a.grid)?;
            emit(&a.output, Container::Spectrum(qper(&q)))
        }
        Command::Spec(a) => spec(a),
        Command::Granger(a) => granger(a),
        Command::Simulate(a) => {
            let process: Process = a.process.parse()?;
            let y = process.generate(a.n, a.seed)?;
            with_writer(a.out.as_deref(), |w| Ok(write_series_csv(w, &y)?))
        }
        Command::Oracle(a) => {
            let process: Process = a.process.parse()?;
            let grid = parse_grid(&a.grid)?;
            let oracle = match &a.cache_dir {
                Some(dir) => oracle_cached(&process, a.n, &grid, a.runs, a.seed, dir)?,
                None => oracle_spectrum(&process, a.n, &grid, a.runs, a.seed)?,
            };
            emit(&a.output, Container::Spectrum(oracle.field))
        }
        Command::Benchmark(a) => benchmark(a),
        Command::Kld(a) => {
            let est = read_spectrum(&a.estimate)?;
            let truth = read_spectrum(&a.truth)?;
            let value = kld(&est, &truth)?;
            println!("{}", fmt_f64(value));
            if let Some(path) = &a.json {
                write_json(path, &json!({ "kld": value }))?;
            }
            Ok(())
        }
    }
}

/// `min:max:step`, a single level, or an explicit list.
pub fn parse_grid(g: &GridArgs) -> Result<QuantileGrid, Failure> {
    if let Some(list) = &g.alpha_list {
        return Ok(QuantileGrid::new(list.clone())?);
    }
    let parts: Vec<&str> = g.alpha.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("invalid quantile grid '{}'", g.alpha)))
    };
    match parts.as_slice() {
        [a] => Ok(QuantileGrid::new(vec![num(a)?])?),
        [lo, hi, step] => Ok(QuantileGrid::range(num(lo)?, num(hi)?, num(step)?)?),
        _ => Err(usage(format!("invalid quantile grid '{}' (expected min:max:step)", g.alpha))),
    }
}

fn load_series(input: &InputArgs) -> Result<MultiSeries, Failure> {
    let path = input
        .input
        .as_ref()
        .ok_or_else(|| usage("an input series (--in) is required"))?;
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let series = read_series_csv(file).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    match &input.channels {
        Some(ch) => {
            let idx = ch
                .iter()
                .map(|&c| c.checked_sub(1).ok_or_else(|| usage("channels are numbered from 1")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(series.select(&idx)?)
        }
        None => Ok(series),
    }
}

fn load_qdft(input: &InputArgs, grid: &GridArgs) -> Result<QdftArray, Failure> {
    if let Some(path) = &input.qdft {
        return match read_container(path)? {
            Container::Qdft(q) => Ok(q),
            other => Err(usage(format!("{} holds a {}, expected a QDFT", path.display(), other.kind_name()))),
        };
    }
    if input.qser.is_some() {
        return Err(usage("this command needs a series or a QDFT, not a quantile series"));
    }
    Ok(qdft(&load_series(input)?, &parse_grid(grid)?)?)
}

fn load_qser(input: &InputArgs, grid: &GridArgs) -> Result<QuantileSeries, Failure> {
    if let Some(path) = &input.qser {
        return match read_container(path)? {
            Container::Qser(q) => Ok(q),
            other => Err(usage(format!(
                "{} holds a {}, expected a quantile series",
                path.display(),
                other.kind_name()
            ))),
        };
    }
    Ok(qser(&load_qdft(input, grid)?)?)
}

fn with_writer(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Outcome) -> Outcome {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn emit(out: &OutputArgs, item: Container) -> Outcome {
    let format = out.format.unwrap_or(match &out.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
        Some(_) => Format::Bin,
        None => Format::Csv,
    });
    match format {
        Format::Bin => {
            let path = out
                .out
                .as_ref()
                .ok_or_else(|| usage("binary output needs a file (--out)"))?;
            Ok(write_container(path, &item)?)
        }
        Format::Csv => with_writer(out.out.as_deref(), |w| {
            match &item {
                Container::Qdft(q) => write_qdft_csv(w, q)?,
                Container::Qser(q) => write_qser_csv(w, q)?,
                Container::Qacf(a) => write_qacf_csv(w, a)?,
                Container::Spectrum(s) => write_spectrum_csv(w, s)?,
                Container::Sar(_) => return Err(usage("SAR models are stored in binary form only")),
            }
            Ok(())
        }),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    with_writer(Some(path), |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| usage(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })
}

fn order_choice(m: &ModelArgs) -> Result<OrderChoice, Failure> {
    if m.p.eq_ignore_ascii_case("auto") {
        Ok(OrderChoice::Aic { max: m.p_max })
    } else {
        m.p.parse()
            .map(OrderChoice::Fixed)
            .map_err(|_| usage(format!("--p must be a non-negative integer or 'auto', got '{}'", m.p)))
    }
}

fn smoothing(m: &ModelArgs) -> Result<Smoothing, Failure> {
    if let Some(l) = m.lambda {
        return Ok(Smoothing::Lambda(l));
    }
    if m.spar.eq_ignore_ascii_case("gcv") {
        Ok(Smoothing::Gcv(default_spar_grid()))
    } else {
        m.spar
            .parse()
            .map(Smoothing::Spar)
            .map_err(|_| usage(format!("--spar must be a number or 'gcv', got '{}'", m.spar)))
    }
}

fn fit_model(qs: &QuantileSeries, m: &ModelArgs) -> Result<SarFit, Failure> {
    let basis = Arc::new(SplineBasis::new(qs.grid().levels())?);
    Ok(fit_sar_auto(qs, order_choice(m)?, &smoothing(m)?, &basis)?)
}

fn spec(a: SpecArgs) -> Outcome {
    let qs = load_qser(&a.input, &a.grid)?;
    let freqs: Vec<f64> = match &a.freqs {
        Some(f) => f.iter().map(|x| 2.0 * std::f64::consts::PI * x).collect(),
        None => fourier_frequencies(qs.n()),
    };
    if a.estimator != Estimator::Sar && (a.model_out.is_some() || a.sidecar.is_some()) {
        return Err(usage("--model-out and --sidecar apply to the SAR estimator only"));
    }
    let field = match a.estimator {
        Estimator::Ar => {
            let p = match order_choice(&a.model)? {
                OrderChoice::Fixed(p) => p,
                OrderChoice::Aic { max } => select_order(&qs, max)?.order,
            };
            ar_estimate(&qacf(&qs, p)?, p, &freqs)?
        }
        Estimator::Lw => {
            let window: Window = a.window.parse()?;
            lw_estimate(&qacf(&qs, a.bandwidth)?, a.bandwidth, window, &freqs)?
        }
        Estimator::Sar => {
            let fit = fit_model(&qs, &a.model)?;
            if let Some(path) = &a.sidecar {
                write_json(path, &sar_summary(&fit))?;
            }
            if let Some(path) = &a.model_out {
                write_container(path, &Container::Sar(fit.model.clone()))?;
            }
            sar_spectrum(&fit.model, &freqs, qs.grid())?
        }
    };
    emit(&a.output, Container::Spectrum(field))
}

fn sar_summary(fit: &SarFit) -> serde_json::Value {
    let m = &fit.model;
    json!({
        "p": m.order(),
        "spar": m.spar(),
        "lambda": m.lambda(),
        "tr_H": m.hat_trace(),
        "gcv": m.gcv(),
        "gcv_curve": fit.spar.as_ref().map(|s| s.curve.iter().map(|(x, g)| json!({"spar": x, "gcv": g})).collect::<Vec<_>>()),
        "mean_aic": fit.order.as_ref().map(|o| o.mean_aic.clone()),
    })
}

fn granger(a: GrangerArgs) -> Outcome {
    let qs = load_qser(&a.input, &a.grid)?;
    let model = match &a.model_in {
        Some(path) => match read_container(path)? {
            Container::Sar(m) => m,
            other => return Err(usage(format!("{} holds a {}, expected a SAR model", path.display(), other.kind_name()))),
        },
        None => fit_model(&qs, &a.model)?.model,
    };
    let m = model.m();
    let index = |c: usize, name: &str| {
        if c >= 1 && c <= m {
            Ok(c - 1)
        } else {
            Err(usage(format!("--{name} must be a channel between 1 and {m}")))
        }
    };
    let (effect, cause) = (index(a.effect, "effect")?, index(a.cause, "cause")?);
    if effect == cause {
        return Err(usage("--cause and --effect must differ"));
    }
    let h = GcHypothesis::from_fit(model, &qs, effect, cause)?;
    let config = BootstrapConfig {
        replicates: a.replicates,
        burn_in: a.burn_in,
        seed: a.seed,
    };
    let result = granger_test(&h, &config)?;
    if let Some(path) = &a.band {
        with_writer(Some(path), |w| Ok(result.write_band_csv(w)?))?;
    }
    let value = result.to_json();
    match &a.out {
        Some(path) => write_json(path, &value),
        None => {
            println!("{}", serde_json::to_string_pretty(&value).map_err(|e| usage(e.to_string()))?);
            Ok(())
        }
    }
}

fn benchmark(a: BenchmarkArgs) -> Outcome {
    let process: Process = a.process.parse()?;
    let grid = parse_grid(&a.grid)?;
    let estimators = a
        .estimators
        .iter()
        .map(|s| s.parse::<EstimatorConfig>())
        .collect::<Result<Vec<_>, _>>()?;
    let truth = match &a.oracle {
        Some(path) => read_spectrum(path)?,
        None => match &a.cache_dir {
            Some(dir) => oracle_cached(&process, a.n, &grid, a.oracle_runs, a.seed, dir)?.field,
            None => oracle_spectrum(&process, a.n, &grid, a.oracle_runs, a.seed)?.field,
        },
    };
    let rows = mc_benchmark(&process, a.n, &grid, &estimators, a.runs, a.seed, &truth)?;
    with_writer(a.out.as_deref(), |w| {
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| usage(e.to_string());
        csv.write_record(["estimator", "n", "runs", "mean_kld", "se", "failures"]).map_err(io)?;
        for r in &rows {
            csv.write_record([
                r.estimator.clone(),
                r.n.to_string(),
                r.runs.to_string(),
                fmt_f64(r.mean_kld),
                fmt_f64(r.se),
                r.failures.len().to_string(),
            ])
            .map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if let Some(path) = &a.json {
        let value = serde_json::to_value(&rows).map_err(|e| usage(e.to_string()))?;
        write_json(path, &json!({ "process": process.key(), "seed": a.seed, "results": value }))?;
    }
    Ok(())
}
