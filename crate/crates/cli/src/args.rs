use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qfa", version, about = "Quantile-frequency analysis of multichannel time series")]
pub struct Cli {
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, env = "QFA_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantile discrete Fourier transform
    Qdft(TransformArgs),
    /// Quantile series (inverse transform of the QDFT)
    Qser(TransformArgs),
    /// Quantile autocovariances
    Qacf(QacfArgs),
    /// Quantile periodogram
    Qper(TransformArgs),
    /// Estimate the quantile spectrum
    Spec(SpecArgs),
    /// Bootstrap test of Granger causality between two channels
    Granger(GrangerArgs),
    /// Simulate a benchmark process
    Simulate(SimulateArgs),
    /// Ensemble-mean quantile periodogram of a benchmark process
    Oracle(OracleArgs),
    /// Monte Carlo comparison of estimators against an oracle
    Benchmark(BenchmarkArgs),
    /// Kullback–Leibler divergence between two spectra
    Kld(KldArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Bin,
    Csv,
}

/// Where the data comes from.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Series CSV: n rows, one column per channel, optional header row
    #[arg(long = "in", value_name = "CSV")]
    pub input: Option<PathBuf>,

    /// Channels to use, 1-based and comma separated (default: all)
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,

    /// Stored QDFT container instead of a series
    #[arg(long, value_name = "BIN", conflicts_with = "input")]
    pub qdft: Option<PathBuf>,

    /// Stored quantile-series container instead of a series
    #[arg(long, value_name = "BIN", conflicts_with_all = ["input", "qdft"])]
    pub qser: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Quantile levels as min:max:step, or a single level
    #[arg(long, default_value = "0.1:0.9:0.01", conflicts_with = "alpha_list")]
    pub alpha: String,

    /// Explicit quantile levels, comma separated
    #[arg(long, value_delimiter = ',')]
    pub alpha_list: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (default: CSV on standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Output format (default: from the file extension, CSV for .csv)
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct QacfArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Largest lag
    #[arg(long, default_value_t = 30)]
    pub max_lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Estimator {
    Ar,
    Sar,
    Lw,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Autoregressive order, or `auto` for the smallest average AIC
    #[arg(long, default_value = "auto")]
    pub p: String,

    /// Largest order considered by `--p auto`
    #[arg(long, default_value_t = 15)]
    pub p_max: usize,

    /// Smoothing parameter, or `gcv` to select it
    #[arg(long, default_value = "gcv", conflicts_with = "lambda")]
    pub spar: String,

    /// Penalty weight given directly instead of through `--spar`
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    /// Estimator
    #[arg(long = "est", value_enum)]
    pub estimator: Estimator,

    /// Lag-window bandwidth
    #[arg(long = "M", default_value_t = 30)]
    pub bandwidth: usize,

    /// Lag window
    #[arg(long, default_value = "tukey-hanning")]
    pub window: String,

    /// Frequencies as cycles per sample, comma separated (default: Fourier grid)
    #[arg(long, value_delimiter = ',')]
    pub freqs: Option<Vec<f64>>,

    /// Write the fitted SAR model container here
    #[arg(long, value_name = "BIN")]
    pub model_out: Option<PathBuf>,

    /// Write the SAR fit summary (JSON) here
    #[arg(long, value_name = "JSON")]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GrangerArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    /// Fitted SAR model container (needs --qser with the fitted series)
    #[arg(long = "model", value_name = "BIN", requires = "qser")]
    pub model_in: Option<PathBuf>,

    /// Channel tested as the cause (1-based)
    #[arg(long)]
    pub cause: usize,

    /// Channel tested as the effect (1-based)
    #[arg(long)]
    pub effect: usize,

    /// Bootstrap replicates
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,

    /// Simulated steps discarded before each bootstrap series
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// JSON result (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// CSV of observed paths and bootstrap band
    #[arg(long, value_name = "CSV")]
    pub band: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// mixture or arma21
    #[arg(long)]
    pub process: String,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Series CSV (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// mixture or arma21
    #[arg(long)]
    pub process: String,

    #[arg(long)]
    pub n: usize,

    /// Ensemble size
    #[arg(long = "R", default_value_t = 1000)]
    pub runs: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,

    /// Reuse or store the oracle in this directory
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// mixture or arma21
    #[arg(long)]
    pub process: String,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 100)]
    pub runs: usize,

    /// Estimators such as sar:gcv, sar:0.9, ar, lw:30, with optional order
    /// suffix @10 or @aic15 (repeatable)
    #[arg(long = "est", required = true)]
    pub estimators: Vec<String>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Precomputed oracle spectrum container
    #[arg(long, value_name = "BIN")]
    pub oracle: Option<PathBuf>,

    /// Oracle ensemble size when no --oracle is given
    #[arg(long = "R", default_value_t = 1000)]
    pub oracle_runs: usize,

    /// Cache directory for computed oracles
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Summary CSV (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Full JSON results including per-run divergences
    #[arg(long, value_name = "JSON")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KldArgs {
    /// Estimated spectrum container
    #[arg(long = "est", value_name = "BIN")]
    pub estimate: PathBuf,

    /// Reference spectrum container
    #[arg(long, value_name = "BIN")]
    pub truth: PathBuf,

    /// Also write {"kld": value} here
    #[arg(long, value_name = "JSON")]
    pub json: Option<PathBuf>,
}
