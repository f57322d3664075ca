//! Command-line driver: dataset statistics, evaluation runs, shot sweeps,
//! fine-tuning exports, low-resource sampling and source conversion.

mod chart;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{convert, export, run, sample, stats, sweep};
pub use config::{DatasetSelector, EmbeddingSource, RunConfig, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "absa", version, about = "Evaluate LLMs on aspect-based sentiment analysis subtasks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GlobalArgs {
    /// Root of the canonical dataset tree (`<group>/<name>/<subtask>/<split>.jsonl`).
    #[arg(long, global = true, env = "ABSA_DATA_ROOT", default_value = "data")]
    pub data_root: PathBuf,
    /// Completion and embedding cache.
    #[arg(long, global = true, default_value = ".absa-cache")]
    pub cache_dir: PathBuf,
    /// Base seed; every random step derives its own seed from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Example counts per dataset and split.
    Stats(stats::StatsArgs),
    /// Prompt a model on test sets, parse its answers and score them.
    Run(run::RunArgs),
    /// Repeat a run for several shot counts and tabulate F1.
    SweepShots(sweep::SweepArgs),
    /// Write instruction-tuning corpora.
    Export(export::ExportArgs),
    /// Draw a low-resource fraction of a training split.
    Sample(sample::SampleArgs),
    /// Convert a source annotation file into the canonical format.
    Convert(convert::ConvertArgs),
}

/// Outcome of a command that completed: success, or finished with too many
/// unparseable model outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Anomalous,
}

pub fn dispatch(cli: Cli) -> anyhow::Result<Status> {
    let global = cli.global;
    match cli.command {
        Command::Stats(args) => stats::cmd_stats(&global, args),
        Command::Run(args) => run::cmd_run(&global, args),
        Command::SweepShots(args) => sweep::cmd_sweep(&global, args),
        Command::Export(args) => export::cmd_export(&global, args),
        Command::Sample(args) => sample::cmd_sample(&global, args),
        Command::Convert(args) => convert::cmd_convert(&global, args),
    }
}

/// Exit codes: 0 success, 1 parse anomalies above the threshold, 2 any
/// configuration, data or backend error.
pub fn main_with(cli: Cli) -> ExitCode {
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Anomalous) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
