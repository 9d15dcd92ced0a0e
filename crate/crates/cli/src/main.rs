//! `wctext`: build word-character text graphs and train GNN document classifiers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, Range, Threshold};

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<wctext_core::Error> for CliError {
    fn from(e: wctext_core::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else if matches!(e, wctext_core::Error::Config(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "wctext", version, about = "Word-character heterogeneous graph text classification")]
pub struct Cli {
    /// Run configuration file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded execution for bitwise-reproducible output.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a graph file from a TSV corpus.
    BuildGraph {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the validation split.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        build: BuildArgs,
        #[command(flatten)]
        ablation: AblationArgs,
    },
    /// Train a model on a graph file, one run per seed.
    Train {
        #[arg(long)]
        graph: PathBuf,
        /// First run seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        ablation: AblationArgs,
        /// Write one JSON report per run to this file.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Save the first run's best parameters as JSON.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Score a saved model on every split of a graph.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        precision: Option<commands::Precision>,
    },
    /// Character n-gram range sweep over an upper-triangular grid.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        /// Validation split seed and first run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Range of lower bounds, MIN:MAX.
        #[arg(long)]
        lo: Option<Range>,
        /// Range of upper bounds, MIN:MAX.
        #[arg(long)]
        hi: Option<Range>,
        #[command(flatten)]
        build: BuildArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        ablation: AblationArgs,
        /// Write one JSON object per cell to this file instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// List a node's neighbors by edge type.
    Inspect {
        #[arg(long)]
        graph: PathBuf,
        /// `type:index` (e.g. word:42) or `type=key` (e.g. word=cat).
        #[arg(long)]
        node: String,
    },
}

#[derive(Args, Debug, Default)]
pub struct BuildArgs {
    /// Drop words occurring in fewer documents.
    #[arg(long)]
    pub min_df: Option<usize>,
    /// File with one stopword per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// PMI sliding-window length.
    #[arg(long)]
    pub window: Option<usize>,
    /// MIN:MAX or none.
    #[arg(long)]
    pub char_ngrams: Option<Range>,
    /// MIN:MAX or none.
    #[arg(long)]
    pub word_ngrams: Option<Range>,
    /// Frequency cut-off for both n-gram kinds.
    #[arg(long)]
    pub ngram_min_freq: Option<usize>,
    /// Cosine threshold for document edges, or none.
    #[arg(long)]
    pub sim_threshold: Option<Threshold>,
}

#[derive(Args, Debug, Default)]
pub struct AblationArgs {
    #[arg(long)]
    pub no_grams: bool,
    #[arg(long)]
    pub no_chargrams: bool,
    #[arg(long)]
    pub no_doc_sim: bool,
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// wctext_gcn or wctext_gat.
    #[arg(long)]
    pub model: Option<wctext_core::ModelKind>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub edge_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Keep attention coefficients free of dropout.
    #[arg(long)]
    pub no_attention_dropout: bool,
    #[arg(long)]
    pub leaky_slope: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<commands::Precision>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    commands::dispatch(&cli, &file)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wctext: {e}");
            ExitCode::from(e.code())
        }
    }
}
