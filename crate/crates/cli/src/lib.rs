//! Command-line orchestration for `htmodel`.
//!
//! A single TOML file ([`config::PipelineConfig`]) drives a chain of stages.
//! Each stage reads the artifacts of earlier stages from the output
//! directory and writes exactly one artifact of its own.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use artifacts::Stage;
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{Pipeline, StageOutcome};

#[derive(Debug, Parser)]
#[command(name = "htmodel", version, about = "Hybrid topic analytics pipeline")]
pub struct Cli {
    /// Pipeline config file.
    #[arg(short, long, global = true, default_value = "htmodel.toml")]
    pub config: PathBuf,

    /// Write artifacts here instead of the config's `output_dir`.
    #[arg(short, long, global = true)]
    pub output_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read the corpus inputs into corpus.jsonl.
    Ingest,
    /// Language filter, tokenize, drop stopwords, stem: tokenized.json.
    Preprocess,
    /// Fit the configured topic model: topics.json.
    Fit,
    /// Coherence, coverage and diversity: metrics.json.
    Metrics,
    /// Label every topic through the configured provider: labels.json.
    Label,
    /// Merge topics with similar labels: merged.json.
    Merge,
    /// Dominant topic and cluster per document: assignments.csv.
    Assign,
    /// Monthly absolute and relative impact: impact.csv.
    Impact,
    /// Combined score over the alpha grid for the compared models: scores.csv.
    Score,
    /// Metrics over the configured T and K grids: sweep.csv.
    Sweep,
    /// Summary of every artifact: report.json.
    Report,
    /// Every stage in order, skipping those that are up to date.
    RunAll,
}

impl Command {
    pub fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Preprocess => Stage::Preprocess,
            Command::Fit => Stage::Fit,
            Command::Metrics => Stage::Metrics,
            Command::Label => Stage::Label,
            Command::Merge => Stage::Merge,
            Command::Assign => Stage::Assign,
            Command::Impact => Stage::Impact,
            Command::Score => Stage::Score,
            Command::Sweep => Stage::Sweep,
            Command::Report => Stage::Report,
            Command::RunAll => return None,
        })
    }
}

pub fn execute(cli: &Cli) -> CliResult<Vec<StageOutcome>> {
    let cfg = PipelineConfig::load(&cli.config)?;
    let mut p = Pipeline::new(cfg);
    if let Some(dir) = &cli.output_dir {
        p = p.with_output_dir(dir);
    }
    match cli.command.stage() {
        Some(stage) => Ok(vec![p.run_stage(stage)?]),
        None => p.run_all(),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
