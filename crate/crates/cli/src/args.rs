use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Closed-form Gaussian partial information decomposition.
///
/// Every flag can also be set through an environment variable named
/// `GAUSSPID_<FLAG>` (upper case, dashes as underscores), e.g.
/// `GAUSSPID_SEED=7`. Command-line flags take precedence.
///
/// Exit codes: 0 success, 1 validation failure, 2 invalid input,
/// 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "gausspid", version, about, long_about)]
pub struct Cli {
    /// Worker threads (default: all available cores; timing runs use one).
    #[arg(long, global = true, env = "GAUSSPID_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Estimate measures from a CSV of samples.
    Estimate(EstimateArgs),
    /// Rerun one of the benchmark experiments.
    Benchmark(BenchmarkArgs),
    /// Run the Monte-Carlo oracle and consistency checks.
    Validate(ValidateArgs),
    /// Write synthetic samples from a named system as CSV.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureArg {
    /// Two-source redundancy (N = 2 only).
    Red,
    /// Unique information of every source.
    Un,
    /// Synergistic effect of order --order.
    Se,
    /// Narrow synergy, optionally restricted with --subset.
    Syn,
    /// Total synergistic effect.
    Tse,
    /// SE_2 … SE_N.
    Spectrum,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// Samples, one row per observation, target columns first.
    #[arg(long, env = "GAUSSPID_INPUT")]
    pub input: PathBuf,

    /// Layout sidecar: a path to, or inline, `{"target_dim": t, "source_dims": [d1, …]}`.
    #[arg(long, env = "GAUSSPID_LAYOUT")]
    pub layout: String,

    /// The first CSV row is a header.
    #[arg(long, env = "GAUSSPID_HEADER")]
    pub header: bool,

    /// Comma-separated measures.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "tse", env = "GAUSSPID_MEASURES")]
    pub measures: Vec<MeasureArg>,

    /// Ridge λ added to the empirical covariance (0 = none).
    #[arg(long, default_value_t = 0.0, env = "GAUSSPID_RIDGE")]
    pub ridge: f64,

    /// One-based source indices for `syn`, e.g. `1,2`.
    #[arg(long, value_delimiter = ',', env = "GAUSSPID_SUBSET")]
    pub subset: Option<Vec<usize>>,

    /// Order K for `se`.
    #[arg(long, env = "GAUSSPID_ORDER")]
    pub order: Option<usize>,

    /// Allow the spectrum at or above the source cap.
    #[arg(long, env = "GAUSSPID_ALLOW_LARGE_SPECTRUM")]
    pub allow_large_spectrum: bool,

    /// Output file (default: standard output).
    #[arg(long, env = "GAUSSPID_OUT")]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "json", env = "GAUSSPID_FORMAT")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Plug-in recovery on the five-source benchmark.
    Recovery,
    /// Wall-clock medians over growing N.
    Scaling,
    /// Relative TSE error over a sample-size × ridge grid.
    Ridge,
    /// Bias and spread across sample sizes.
    Convergence,
    /// Plug-in decomposition of the five two-source configurations.
    TwoSource,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,

    #[arg(long, default_value_t = 0, env = "GAUSSPID_SEED")]
    pub seed: u64,

    /// Trials per configuration (default depends on the experiment).
    #[arg(long, env = "GAUSSPID_TRIALS")]
    pub trials: Option<usize>,

    /// Samples per trial for recovery, two-source and scaling.
    #[arg(long, env = "GAUSSPID_SAMPLES")]
    pub samples: Option<usize>,

    /// Sample sizes for ridge and convergence.
    #[arg(long, value_delimiter = ',', env = "GAUSSPID_SAMPLE_GRID")]
    pub sample_grid: Option<Vec<usize>>,

    /// Ridge strengths for the ridge sweep.
    #[arg(long, value_delimiter = ',', env = "GAUSSPID_LAMBDA_GRID")]
    pub lambda_grid: Option<Vec<f64>>,

    /// Source counts for scaling.
    #[arg(long, value_delimiter = ',', env = "GAUSSPID_N_GRID")]
    pub n_grid: Option<Vec<usize>>,

    /// Methods timed by scaling: spectrum, tse, un, syn.
    #[arg(long, value_delimiter = ',', env = "GAUSSPID_METHODS")]
    pub methods: Option<Vec<String>>,

    /// Per-method time budget for scaling, in seconds.
    #[arg(long, default_value_t = 1000.0, env = "GAUSSPID_BUDGET_SECONDS")]
    pub budget_seconds: f64,

    /// Output directory for the per-trial CSV, summary CSV and summary JSON
    /// (default: summary to standard output).
    #[arg(long, env = "GAUSSPID_OUT")]
    pub out: Option<PathBuf>,

    /// Format of the summary on standard output.
    #[arg(long, value_enum, default_value = "json", env = "GAUSSPID_FORMAT")]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 0, env = "GAUSSPID_SEED")]
    pub seed: u64,

    /// `random`, `five-source`, or a two-source configuration name.
    #[arg(long, default_value = "random", env = "GAUSSPID_SYSTEM")]
    pub system: String,

    /// Number of random systems.
    #[arg(long, default_value_t = 20, env = "GAUSSPID_SYSTEMS")]
    pub systems: usize,

    /// Family to check, e.g. `C2`, `U1`, `{1,2};{3}` (default: every C_K and U_1).
    #[arg(long, env = "GAUSSPID_FAMILIES")]
    pub families: Option<String>,

    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 100_000, env = "GAUSSPID_SAMPLES")]
    pub samples: usize,

    /// Corrupt Γ before the Schur route to exercise the failure path.
    #[arg(long, hide = true, env = "GAUSSPID_INJECT_FAULT")]
    pub inject_fault: bool,

    /// Report file (default: standard output).
    #[arg(long, env = "GAUSSPID_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// `five-source`, `five-source-generative`, `scaling:<N>`, or a two-source configuration name.
    #[arg(long, env = "GAUSSPID_SYSTEM")]
    pub system: String,

    #[arg(long, default_value_t = 1000, env = "GAUSSPID_SAMPLES")]
    pub samples: usize,

    #[arg(long, default_value_t = 0, env = "GAUSSPID_SEED")]
    pub seed: u64,

    /// Write a header row.
    #[arg(long, env = "GAUSSPID_HEADER")]
    pub header: bool,

    /// CSV file (default: standard output).
    #[arg(long, env = "GAUSSPID_OUT")]
    pub out: Option<PathBuf>,

    /// Also write the layout sidecar to this path.
    #[arg(long, env = "GAUSSPID_LAYOUT")]
    pub layout: Option<PathBuf>,
}
