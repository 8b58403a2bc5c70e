use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable consulted when `--db` is absent.
pub const DB_ENV: &str = "SQLGLM_DB";

#[derive(Debug, Parser)]
#[command(name = "sqlglm", version, about = "One-step GLM fits over SQL tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model: subsample fit, then one scoring step over the whole table.
    Fit(FitArgs),
    /// Write a synthetic table.
    Simulate(SimulateArgs),
    /// Compare one-step fits with the full-data MLE over replicated synthetic tables.
    Bench(BenchArgs),
    /// Import a CSV file into a table.
    Load(LoadArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InfoSourceArg {
    /// Subsample information scaled by N/n.
    Subsample,
    /// Information aggregated over every row.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Bernoulli,
    Exact,
}

#[derive(Debug, Default, Args)]
pub struct FitArgs {
    /// TOML file with `db`, `seed`, `format`, `[model]` and `[sample]`; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// SQLite database file.
    #[arg(long, env = DB_ENV)]
    pub db: Option<String>,
    #[arg(long)]
    pub table: Option<String>,
    /// Response column, or `column=LEVEL` for a level indicator.
    #[arg(long)]
    pub response: Option<String>,
    /// e.g. `x1,C(colour),C(grade,ref=B),x1:x2`; `-1` drops the intercept.
    #[arg(long)]
    pub terms: Option<String>,
    /// SQL predicate restricting the modelling population.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub family: Option<String>,
    /// Defaults to the family's canonical link.
    #[arg(long)]
    pub link: Option<String>,
    /// Subsample size exponent: n = N^exponent.
    #[arg(long)]
    pub exponent: Option<f64>,
    #[arg(long)]
    pub floor: Option<u64>,
    #[arg(long, value_enum)]
    pub sample_method: Option<MethodArg>,
    #[arg(long, value_enum)]
    pub info_source: Option<InfoSourceArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub max_levels: Option<usize>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[arg(long, default_value = "sim")]
    pub table: String,
    #[arg(long, default_value_t = 100_000)]
    pub rows: u64,
    /// True coefficients: intercept, numerics, then categorical indicators.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub beta: Vec<f64>,
    /// `NAME:LEVELS` or `NAME:LEVELS:RARE` (last level has frequency RARE).
    #[arg(long = "categorical")]
    pub categorical: Vec<String>,
    #[arg(long, default_value = "binomial")]
    pub family: String,
    #[arg(long)]
    pub link: Option<String>,
    /// Gaussian variance or gamma dispersion.
    #[arg(long, default_value_t = 1.0)]
    pub dispersion: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, env = DB_ENV)]
    pub db: String,
    #[command(flatten)]
    pub design: DesignArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 3)]
    pub replicates: usize,
    /// Comma-separated sampling exponents.
    #[arg(long, value_delimiter = ',', default_value = "0.5555555555555556")]
    pub exponents: Vec<f64>,
    /// Write one row per replicate, estimator and coordinate here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Run replicates one after another.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct LoadArgs {
    #[arg(long, env = DB_ENV)]
    pub db: String,
    #[arg(long)]
    pub table: String,
    /// CSV file with a header row.
    pub file: PathBuf,
    /// Drop the table first if it exists.
    #[arg(long)]
    pub replace: bool,
}
