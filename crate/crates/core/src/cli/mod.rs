//! Command-line front end: one subcommand per pipeline step, all driven by
//! a single run configuration file.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::gateway::GatewayMode;

pub use commands::{cell_name, cells_from_predictions, CellPredictions, MemberSummary, ReportValues};
pub use config::{
    require_paths, AnnotateSection, BuildSection, GenerateSection, ReportSection, ReviewSection, RunConfig, Seeds,
    TrainSection,
};
pub use manifest::{digest, Manifest, OutputLock, LOCK_FILE};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
/// Bronze generation stopped at its request budget before meeting quotas.
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    QuotaUnmet,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Complete => EXIT_OK,
            Outcome::QuotaUnmet => EXIT_PARTIAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Live,
    Record,
    Replay,
}

impl From<ModeArg> for GatewayMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => GatewayMode::Live,
            ModeArg::Record => GatewayMode::Record,
            ModeArg::Replay => GatewayMode::Replay,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "adsynth",
    version,
    about = "Guideline-driven synthetic data and ensemble evaluation"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "adsynth.toml")]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the gateway mode from the config.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label supplied notes with the LLM and keep verified annotations (silver).
    Annotate,
    /// Generate synthetic annotated notes until quotas are met (bronze).
    Generate,
    /// Deduplicate, split, sample negatives and compute statistics.
    Build,
    /// Train ensembles for every configured task and combination.
    Train,
    /// Render comparison tables from trained cells or stored values.
    Report,
    /// Human quality review of a labeled dataset.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    /// Draw a seeded sample and write a fillable sheet.
    Sample {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a completed sheet.
    Ingest {
        #[arg(long)]
        sheet: PathBuf,
    },
}

pub fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let (Some(mode), Some(gw)) = (cli.mode, config.gateway.as_mut()) {
        gw.mode = mode.into();
    }
    Ok(config)
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let config = load_config(cli)?;
    execute(&cli.command, &config)
}

pub fn execute(command: &Command, config: &RunConfig) -> anyhow::Result<Outcome> {
    match command {
        Command::Annotate => commands::annotate(config),
        Command::Generate => commands::generate(config),
        Command::Build => commands::build(config),
        Command::Train => commands::train(config),
        Command::Report => commands::report(config),
        Command::Review { action } => match action {
            ReviewAction::Sample { dataset, size, seed } => {
                commands::review_sample(config, dataset.clone(), *size, *seed)
            }
            ReviewAction::Ingest { sheet } => commands::review_ingest(config, sheet),
        },
    }
}
