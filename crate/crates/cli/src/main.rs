mod commands;
mod error;
mod input;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "mutind", version, about = "Posterior inference over patterns of mutual independence")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact posterior by enumerating all partitions (D <= 12).
    Exact(ExactArgs),
    /// MCMC estimate of the posterior.
    Sample(SampleArgs),
    /// Simulation study on synthetic data with a known partition.
    Simulate(SimulateArgs),
    /// Print an embedded dataset.
    Dataset(DatasetArgs),
    /// Pairwise L1 distances between posterior CSV files.
    Distance(DistanceArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    /// Observations, one row per sample.
    Data,
    /// Covariance matrix (needs --n).
    Cov,
    /// Correlation matrix (needs --n).
    Corr,
    /// Contingency table: `arities,a1,..,aD` then `x1,..,xD,count` rows.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BayesOptim,
    BayesCorr,
    Bic,
    Multinomial,
    MultinomialBic,
    /// Uniform posterior (for testing).
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InputArgs {
    /// CSV input file.
    #[arg(long, conflicts_with = "dataset")]
    pub input: Option<PathBuf>,
    /// Embedded dataset name (hiv).
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum, default_value = "data")]
    pub input_kind: InputKind,
    /// Sample size behind a covariance or correlation matrix.
    #[arg(long)]
    pub n: Option<usize>,
    /// Deviations around a known (zero) mean: N_eff = N.
    #[arg(long, conflicts_with = "sample_mean")]
    pub known_mean: bool,
    /// Deviations around the sample mean: N_eff = N - 1.
    #[arg(long)]
    pub sample_mean: bool,
    /// Scoring model (default: bayes-optim, or multinomial for tables).
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Symmetric Dirichlet concentration for multinomial models.
    #[arg(long, default_value_t = 1.0)]
    pub dirichlet: f64,
    /// Dimension for the constant model without input.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct QueryArgs {
    /// Number of top partitions to report (CSV output is truncated only when given).
    #[arg(long)]
    pub top: Option<usize>,
    /// Block whose relevance to report, e.g. 356 or 3,5,6 (repeatable).
    #[arg(long)]
    pub relevance: Vec<String>,
    /// Variables whose co-membership probability to report (repeatable).
    #[arg(long)]
    pub same_block: Vec<String>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write outputs and manifest.json here instead of stdout/stderr.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ExactArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub query: QueryArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    /// gibbs, 2wshc, gibbs+2wshc, gibbs+pt, 2wshc+pt or gibbs+2wshc+pt.
    #[arg(long, default_value = "gibbs+2wshc+pt")]
    pub preset: String,
    /// Recorded states per chain (J).
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    /// Independent chains (C).
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Uniform draws for importance-resampled starts (M).
    #[arg(long, default_value_t = 10_000)]
    pub init_draws: usize,
    /// Explicit temperatures, e.g. 1,2,4,8.
    #[arg(long, conflicts_with = "levels")]
    pub ladder: Option<String>,
    /// Number of temperatures in a geometric ladder (L).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Highest temperature of the geometric ladder.
    #[arg(long, default_value_t = mutind::sampler::DEFAULT_T_MAX)]
    pub t_max: f64,
    /// Swap probability.
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Gibbs probability.
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Fraction of each chain discarded as burn-in.
    #[arg(long, default_value_t = 0.5)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// exhaustive or metropolized.
    #[arg(long, default_value = "exhaustive")]
    pub shc_mode: String,
    /// Visit elements in random order during Gibbs sweeps.
    #[arg(long)]
    pub random_scan: bool,
    /// chain-local, shared or disabled.
    #[arg(long, default_value = "chain-local")]
    pub cache: String,
    /// Maximum number of cached block scores.
    #[arg(long)]
    pub cache_capacity: Option<usize>,
    /// Recompute every n-th cache hit as a consistency check (0: off).
    #[arg(long, default_value_t = 0)]
    pub cache_audit: u64,
    /// Largest 2-way candidate set enumerated in exhaustive mode.
    #[arg(long)]
    pub max_candidates: Option<u128>,
    /// Write per-chain traces (requires --out-dir).
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 6)]
    pub dim: usize,
    /// Block counts: a range like 1-6 or a list like 1,3,6.
    #[arg(long, default_value = "1-6")]
    pub k: String,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    /// Samples per data set.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// gaussian, student:<zeta> or multinomial:<arity>[,<arity>...].
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, default_value_t = 1.0)]
    pub dirichlet: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    pub name: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DistanceArgs {
    /// Posterior CSV files (partition,probability).
    #[arg(required = true, num_args = 2..)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output directory for the re-run (default: stdout).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Err(e) = commands::run(cli, &args[1..]) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

pub(crate) fn parse_cli(args: &[String]) -> Result<Cli, CliError> {
    Cli::try_parse_from(args).map_err(|e| CliError::input(e.to_string()))
}
