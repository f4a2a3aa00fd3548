//! `bdonset` command line: argument parsing, configuration and subcommands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bdonset::Error),
    #[error("{0}")]
    Config(String),
    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::MissingFile(_) => "missing_file",
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "bdonset", version, about = "Onset-period detection from timestamped short-text archives")]
pub struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, env = config::CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sections (results do not depend on it)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Print the resolved configuration and exit
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a corpus archive
    Ingest(IngestArgs),
    /// Language/activity filter and diagnosis-statement review worklist
    Filter(FilterArgs),
    /// Apply diagnosis labels and the regular-user list; writes cohort.csv
    Label(LabelArgs),
    /// Onset-window feature tables, one per window length
    Featurize(FeaturizeArgs),
    /// Train a forest on one feature variant
    Train(TrainArgs),
    /// Stratified k-fold cross-validation
    Cv(CvArgs),
    /// Onset probability per sliding window
    Timeline(TimelineArgs),
    /// Locate prodromal periods in timelines and draw them
    Prodrome(ProdromeArgs),
    /// Generate a synthetic cohort
    Synth(SynthArgs),
    /// Markdown precision grid over variants and window lengths
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct CohortArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// cohort.csv written by `label`
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Diagnosis label CSV (used with --regular when no cohort file is given)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Regular-user id list, one per line
    #[arg(long)]
    pub regular: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Keywords that must all appear in a diagnosis statement
    #[arg(long, value_delimiter = ',', default_value = "diagnosed,bipolar")]
    pub keywords: Vec<String>,
    /// Time keyword list, one per line
    #[arg(long)]
    pub time_keywords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub regular: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Window lengths in months (default: configured list)
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV (default: <out_dir>/features_a<alpha>m.csv)
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value = "Phon+BDPLF")]
    pub variant: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Variants to evaluate (default: all)
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace labels by a seeded permutation (chance baseline)
    #[arg(long)]
    pub shuffle_labels: bool,
    /// JSON report path (default: <out_dir>/cv_a<alpha>m.json)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TimelineArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// tf-idf state written by `featurize`; needed for tf-idf models
    #[arg(long)]
    pub tfidf: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<u32>,
    #[arg(long)]
    pub step_days: Option<i64>,
    /// Users to score (default: every bipolar and regular user)
    #[arg(long = "user")]
    pub users: Vec<String>,
    /// Restrict to one group: bipolar, regular or unlabeled
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProdromeArgs {
    /// Directory holding timeline_*.csv files (default: out_dir)
    #[arg(long)]
    pub timelines: Option<PathBuf>,
    #[arg(long)]
    pub lower: Option<f64>,
    #[arg(long)]
    pub upper: Option<f64>,
    #[arg(long)]
    pub clear_below_lower: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_bipolar: Option<usize>,
    #[arg(long)]
    pub n_regular: Option<usize>,
    #[arg(long)]
    pub span_days: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory with features_a<m>m.csv files (default: out_dir)
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Markdown output (default: <out_dir>/report.md)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = config::PipelineConfig::load(cli.config.as_deref())?;
    commands::apply_overrides(&mut cfg, &cli.command);
    cfg.validate()?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::dispatch(&cfg, &cli.command))
}
