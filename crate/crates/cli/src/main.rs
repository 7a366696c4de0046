mod commands;
mod config;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use oodscore::dataset::DataError;
use oodscore::embedding::EmbeddingError;
use oodscore::metrics::MetricError;
use oodscore::scorer::ScorerError;
use oodscore::split::SplitError;
use oodscore::synthetic::SyntheticError;
use oodscore::trainer::TrainError;
use thiserror::Error;

use crate::config::{parse_override, LoadedConfig};
use crate::runs::Workspace;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Prerequisite(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Prerequisite(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::MissingEmbedding { .. }
            | ScorerError::DimensionMismatch { .. }
            | ScorerError::InvalidConfig(_)
            | ScorerError::EmptyTrainingSet
            | ScorerError::ValidationTooSmall(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Scorer(e) => e.into(),
            TrainError::Split(e) => e.into(),
            TrainError::EmptyEnsemble | TrainError::InconsistentMembers => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Plot(_) | EmbeddingError::Io { .. } | EmbeddingError::Csv(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SyntheticError> for CliError {
    fn from(e: SyntheticError) -> Self {
        match e {
            SyntheticError::InvalidSpec(_) => CliError::Validation(e.to_string()),
            SyntheticError::Data(e) => e.into(),
            SyntheticError::Train(e) => e.into(),
            SyntheticError::Metric(e) => e.into(),
            SyntheticError::Io { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "oodscore", version, about = "Cluster-holdout evaluation of embedding-based scoring functions")]
struct Cli {
    /// Workspace root; runs are stored under `<root>/runs`.
    #[arg(long, global = true, env = "OODSCORE_WORKSPACE", default_value = ".")]
    workspace: PathBuf,
    /// JSON run configuration. Relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set scorer.max_epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Set every seed (split, scorer, projection, synthetic). `--set` wins over this.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Skf,
    Val,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth and a ready-to-use config.
    Synth,
    /// Join the complex table with embeddings into a dataset.
    Ingest,
    /// Build the cluster-holdout split, leakage filter, folds and holdouts.
    Split {
        /// Ingest run to split (default: newest).
        #[arg(long)]
        from: Option<String>,
    },
    /// Train an ensemble under SKF or VAL.
    Train {
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// VAL target (default: one ensemble per target).
        #[arg(long)]
        target: Option<String>,
        /// Split run to train on (default: newest).
        #[arg(long)]
        from: Option<String>,
    },
    /// Fine-tune an SKF run on target holdouts.
    Finetune {
        #[arg(long)]
        source: String,
        /// Target to fine-tune on (default: every target).
        #[arg(long)]
        target: Option<String>,
    },
    /// Score a train or finetune run on the reporting test sets.
    Evaluate {
        /// Run to evaluate (default: newest train or finetune run).
        #[arg(long)]
        run: Option<String>,
    },
    /// Project interaction embeddings with t-SNE and plot them.
    Project {
        /// Ingest run to project (default: newest).
        #[arg(long)]
        from: Option<String>,
    },
    /// Tabulate evaluate runs side by side.
    Report {
        /// Evaluate runs to include (default: all).
        #[arg(long, num_args = 1..)]
        runs: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        for key in ["split.seed", "scorer.seed", "projection.tsne.seed", "synthetic.seed"] {
            overrides.push((key.to_string(), s.into()));
        }
    }
    for raw in &cli.overrides {
        overrides.push(parse_override(raw)?);
    }
    let cfg = LoadedConfig::load(cli.config.as_deref(), &overrides)?;
    let ws = Workspace::new(cli.workspace);
    let dir = match cli.command {
        Command::Synth => commands::synth(&cfg, &ws)?,
        Command::Ingest => commands::ingest(&cfg, &ws)?,
        Command::Split { from } => commands::split(&cfg, &ws, from.as_deref())?,
        Command::Train { regime, target, from } => {
            let regime = match regime {
                RegimeArg::Skf => oodscore::Regime::Skf,
                RegimeArg::Val => oodscore::Regime::Val,
            };
            commands::train(&cfg, &ws, regime, target.as_deref(), from.as_deref())?
        }
        Command::Finetune { source, target } => commands::finetune(&cfg, &ws, &source, target.as_deref())?,
        Command::Evaluate { run } => commands::evaluate(&cfg, &ws, run.as_deref())?,
        Command::Project { from } => commands::project(&cfg, &ws, from.as_deref())?,
        Command::Report { runs } => commands::report(&cfg, &ws, &runs)?,
    };
    println!("run directory: {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Validation(_) => "validation error",
                CliError::Prerequisite(_) => "missing prerequisite",
                CliError::Runtime(_) => "runtime failure",
            };
            eprintln!("oodscore: {kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
