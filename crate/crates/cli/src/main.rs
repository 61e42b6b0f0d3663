//! `remixtree`: batch driver for the remix-tree collaboration pipeline.
//!
//! Stages chain through files so any prefix of the pipeline can be rerun or
//! inspected: `synth` or a real export produces an event log, `ingest`
//! filters it into a forest, `mine` extracts recurring collaborations,
//! `featurize` turns songs into regression rows, `fit` selects and fits a
//! count model, `profile` enriches collaborations, and `report` renders the
//! accumulated artifacts as text.

mod commands;
mod config;
mod error;
mod io;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "remixtree", version, about = "Remix-tree collaboration analytics")]
struct Cli {
    /// Pipeline configuration file (JSON). Flags override its sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log verbosity: error, warn, info, debug, or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse an event log, apply exclusions, and write the retained forest.
    Ingest(commands::IngestArgs),
    /// Mine recurring collaborations from a forest.
    Mine(commands::MineArgs),
    /// Build regression rows from a forest and its event log.
    Featurize(commands::FeaturizeArgs),
    /// Select and fit a count model on featurized rows.
    Fit(commands::FitArgs),
    /// Enrich mined collaborations with bins, signals, and tag overlaps.
    Profile(commands::ProfileArgs),
    /// Generate a synthetic event log with planted ground truth.
    Synth(commands::SynthArgs),
    /// Render accumulated artifacts as a text report.
    Report(commands::ReportArgs),
}

fn run(cli: &Cli) -> error::Result<()> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(args) => commands::run_ingest(args, &config),
        Command::Mine(args) => commands::run_mine(args, &config),
        Command::Featurize(args) => commands::run_featurize(args),
        Command::Fit(args) => commands::run_fit(args, &config),
        Command::Profile(args) => commands::run_profile(args, &config),
        Command::Synth(args) => commands::run_synth(args, &config),
        Command::Report(args) => commands::run_report(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = log::LevelFilter::from_str(&cli.log_level).unwrap_or(log::LevelFilter::Warn);
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if cli.threads > 0 {
        // Ignore the error from a second initialization: tests drive `run`
        // repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("remixtree: {err}");
            ExitCode::FAILURE
        }
    }
}
