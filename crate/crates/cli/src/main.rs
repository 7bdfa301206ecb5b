//! `p3ls`: generate simulated process data, run the CenPLS / LocalPLS / P3LS
//! comparison and audit protocol transcripts.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use p3ls_core::experiment::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "p3ls", version, about = "Federated PLS experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a multistage dataset and export it as CSV blocks.
    Gen(GenArgs),
    /// Compare the centralized, local and federated models over repeated splits.
    Run(RunArgs),
    /// Check a protocol transcript against the visibility policy.
    Audit(AuditArgs),
}

/// A builtin dataset id (1..=5) or a path to a simulator config JSON file.
#[derive(Debug, Args)]
struct DatasetSource {
    /// Builtin dataset id or simulator config file.
    #[arg(long)]
    dataset: Option<String>,
    /// Override the sample count of the dataset.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    source: DatasetSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for x<i>.csv, y.csv and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Directory written by `p3ls gen`.
    #[arg(long, conflicts_with = "samples")]
    data: Option<PathBuf>,
    /// Generate the dataset in memory instead of reading `--data`. With
    /// `--data`, only used as the report label.
    #[command(flatten)]
    source: DatasetSource,
    /// Comma-separated subset of cen, local, p3ls.
    #[arg(long, value_delimiter = ',', default_value = "cen,local,p3ls")]
    models: Vec<ModelKind>,
    /// Repetitions (default 100).
    #[arg(long, conflicts_with = "quick")]
    reps: Option<usize>,
    /// Ten repetitions.
    #[arg(long)]
    quick: bool,
    /// Largest number of latent variables tried during selection.
    #[arg(long = "kmax", default_value_t = p3ls_core::experiment::DEFAULT_K_MAX)]
    k_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use block-diagonal orthogonal masks instead of dense ones.
    #[arg(long)]
    block_masks: bool,
    /// Also write the protocol transcript of the first repetition's
    /// federated run to this file (JSON lines).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Output directory for report.json and summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// JSON-lines transcript, as written by `p3ls run --transcript`.
    #[arg(long)]
    transcript: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("P3LS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            commands::report_failure("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Run(args) => commands::run(args),
        Command::Audit(args) => commands::audit(args),
    };
    match outcome {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            commands::report_failure(commands::error_kind(&e), &commands::describe(&e));
            ExitCode::FAILURE
        }
    }
}
