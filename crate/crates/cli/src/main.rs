use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tempdrift_core::config::{CorrelateWith, DriftSplit, Overrides};
use tempdrift_core::pipeline::{self, Stage};

/// Temporal drift in time-stamped text corpora, and its relation to model
/// performance changes.
#[derive(Parser)]
#[command(name = "tempdrift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus and record its size and hash.
    Ingest(Common),
    /// Assign documents to temporal domains, equalize them and write split manifests.
    Segment(Common),
    /// Measure drift between all domain pairs and test its significance.
    Drift(Common),
    /// Load model scores and compute performance changes.
    Perf(Common),
    /// Correlate drift with performance changes.
    Correlate(Common),
    /// Render heatmaps and tables.
    Report(Common),
    /// Run every stage in order.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["all", "train"])]
    drift_split: Option<String>,
    #[arg(long, value_parser = ["one_shot", "obs_mean"])]
    correlate_with: Option<String>,
    /// Fail on unassigned documents and unequal run counts.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Ingest(a) => (Stage::Ingest, a),
        Command::Segment(a) => (Stage::Segment, a),
        Command::Drift(a) => (Stage::Drift, a),
        Command::Perf(a) => (Stage::Perf, a),
        Command::Correlate(a) => (Stage::Correlate, a),
        Command::Report(a) => (Stage::Report, a),
        Command::All(a) => (Stage::All, a),
    };
    if args.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let overrides = Overrides {
        master_seed: args.seed,
        output_dir: args.out,
        drift_split: args.drift_split.map(|s| s.parse::<DriftSplit>().expect("checked by clap")),
        correlate_with: args.correlate_with.map(|s| s.parse::<CorrelateWith>().expect("checked by clap")),
        strict: args.strict,
    };
    match pipeline::run_pipeline(&args.config, &overrides, stage, args.threads) {
        Ok(summary) => {
            log::info!("{} files in output", summary.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
