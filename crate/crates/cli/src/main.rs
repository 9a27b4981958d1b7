mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rodbench::bench::Task;
use rodbench::optim::OptimizerKind;
use rodbench::simdata::Property;

/// Synthetic control-rod drive data, fault isolation and diagnostics
/// models, and multi-run optimizer benchmarks.
#[derive(Parser, Debug)]
#[command(name = "rodbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a dataset of banks.
    Gen(GenArgs),
    /// Train the autoencoder and isolate faulty rods.
    Isolate(TrainArgs),
    /// Train the classifier and score the held-out banks.
    Diagnose(DiagnoseArgs),
    /// Multi-run comparison of optimizers on one workload.
    Bench(BenchArgs),
    /// Rank optimizers on growing prefixes of one long sweep.
    RunsStudy(StudyArgs),
    /// Rebuild summaries and figures of an output directory from its records.
    Report(ReportArgs),
    /// Re-run the command recorded in an output directory's manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Output {
    /// Master seed; every other seed is derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (0: one per core). Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    #[serde(skip, default = "default_jobs")]
    pub jobs: usize,
}

fn default_jobs() -> usize {
    1
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, default_value = "current")]
    pub property: Property,
    /// Batches of four banks (healthy, short circuit, jam, wear).
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    pub batches: u64,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dataset directory written by `gen`.
    #[arg(long, env = "RODBENCH_DATA_DIR")]
    pub dataset: PathBuf,
    /// Expected property of the dataset (checked when given).
    #[arg(long)]
    pub property: Option<Property>,
    /// Epochs per training run (default depends on task and property).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// Use bias-corrected moments in Adam and Nadam.
    #[arg(long)]
    pub bias_correction: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "rmsprop")]
    pub optimizer: OptimizerKind,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Split and classify only the faulty banks.
    #[arg(long)]
    pub faulty_only: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "isolation")]
    pub task: Task,
    /// Restrict the sweep to one optimizer (default: all four).
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// Diagnostics only: split and classify only the faulty banks.
    #[arg(long)]
    pub faulty_only: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Runs per optimizer (default 30 for isolation, 20 for diagnostics).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: Option<u64>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Run counts to compare.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30,40")]
    pub counts: Vec<usize>,
    /// Runs per optimizer in the underlying sweep (default: largest count).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: Option<u64>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Output directory of a previous command.
    pub dir: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Output directory holding `experiment.json`.
    pub dir: PathBuf,
    /// Write the replayed outputs here instead of the original directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::RunsStudy(a) = &cli.command {
        let runs = a.runs.map_or(usize::MAX, |r| r as usize);
        if a.counts.is_empty() || a.counts.contains(&0) || a.counts.iter().any(|c| *c > runs) {
            use clap::CommandFactory;
            Cli::command()
                .error(
                    clap::error::ErrorKind::ValueValidation,
                    format!("--counts must be between 1 and --runs ({runs})"),
                )
                .exit();
        }
    }
    match commands::dispatch(cli.command) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::PartialFailure(summary)) => {
            eprintln!("{summary}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
