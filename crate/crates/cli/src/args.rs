//! Command-line surface. Every long flag can also be set from the config
//! file under the same name.

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "insider", version, about = "Detect anomalous investor trading profiles before a price-sensitive event")]
pub struct Cli {
    /// Flat `key = value` file of flag defaults; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, reduce, detect, rank and compare; writes the full report set.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Generate a synthetic transaction ledger with ground-truth labels.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Scan the latent dimension and pick K by flag-set stability.
    #[command(name = "scan-k", args_override_self = true)]
    ScanK(ScanArgs),
    /// Label investors with the k-means comparison baseline.
    #[command(args_override_self = true)]
    Baseline(BaselineArgs),
    /// Over/under-expression of investor types across groups.
    #[command(args_override_self = true)]
    Enrich(EnrichArgs),
    /// Run the numerical self-checks; exits nonzero on any violation.
    #[command(args_override_self = true)]
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Standard,
    Small,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Transaction CSV (investor_id, date, buy_shares, sell_shares and
    /// optionally investor_type, buy_value, sell_value).
    #[arg(long, value_name = "FILE", conflicts_with = "synth")]
    pub input: Option<PathBuf>,

    /// Use a generated scenario instead of an input file.
    #[arg(long, value_enum)]
    pub synth: Option<ScenarioName>,

    /// First day of the analysis window.
    #[arg(long)]
    pub t0: Option<NaiveDate>,

    /// Last day of the analysis window.
    #[arg(long)]
    pub t_end: Option<NaiveDate>,

    /// Day of the price-sensitive event; defaults to the last trading day.
    #[arg(long)]
    pub pse_date: Option<NaiveDate>,

    /// Investigation period length in trading days, ending on the event.
    #[arg(long, default_value_t = 21)]
    pub delta_days: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// pca, lae, or an autoencoder: ae-1, ae-2, ae-3, ae-4.
    #[arg(long, default_value = "pca")]
    pub model: String,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,

    /// L2 penalty of the linear autoencoder.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdArgs {
    /// Fixed reconstruction-error threshold; found from the s* density when absent.
    #[arg(long)]
    pub epsilon_theta: Option<f64>,

    /// Fixed peak-day crowding threshold; 90th percentile of n_t when absent.
    #[arg(long)]
    pub n_theta: Option<f64>,

    /// Investors active on at most this many days skip the crowding test.
    #[arg(long, default_value_t = 3)]
    pub d_theta: usize,

    /// Minimum normalized net buy between the first day and the event.
    #[arg(long, default_value_t = 0.5)]
    pub net_buy: f64,

    /// Apply the crowding test on each investor's peak day only.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub nt_on_tstar_only: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanRange {
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,

    /// Largest K scanned, capped at the number of days.
    #[arg(long, default_value_t = 24)]
    pub k_max: usize,

    /// Consecutive Jaccard values that must clear the bar.
    #[arg(long, default_value_t = 3)]
    pub stability_window: usize,

    #[arg(long, default_value_t = 0.9)]
    pub j_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// Run when currency columns are present.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineOpts {
    /// Clusters per window.
    #[arg(long, default_value_t = 4)]
    pub baseline_k: usize,

    /// k-means restarts per window.
    #[arg(long, default_value_t = 10)]
    pub n_init: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Latent dimension, or `auto` to choose it with a K scan.
    #[arg(long, default_value = "auto")]
    pub k: String,
    #[command(flatten)]
    pub scan: ScanRange,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub baseline: BaselineMode,
    #[command(flatten)]
    pub baseline_opts: BaselineOpts,
    /// Bins of the s* histogram.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[serde(skip)]
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "standard")]
    pub scenario: ScenarioName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[serde(skip)]
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub scan: ScanRange,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[serde(skip)]
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub baseline_opts: BaselineOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[serde(skip)]
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnrichArgs {
    /// CSV with `group` and `investor_type` columns, one row per investor.
    #[arg(long, value_name = "FILE", conflicts_with = "report")]
    pub groups: Option<PathBuf>,

    /// Report CSV from `run`; flagged versus unflagged investors form the
    /// two groups, with types taken from --input.
    #[arg(long, value_name = "FILE", requires = "input")]
    pub report: Option<PathBuf>,

    /// Transaction CSV supplying investor types for --report.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// Family-wise significance level before Bonferroni correction.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,

    #[serde(skip)]
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also write the outcomes as JSON into this directory.
    #[serde(skip)]
    #[arg(long)]
    pub out: Option<PathBuf>,
}
