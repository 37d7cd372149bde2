use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use efgen::harness::{self, ExperimentConfig, HarnessError, Progress};

#[derive(Parser)]
#[command(name = "efgen", version, about = "Exponential-family generative models: generate, train, verify, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset and its manifest.
    Generate(RunArgs),
    /// Fit the configured model and write the trace, model and report.
    Train(RunArgs),
    /// Check a trained model: criterion, gaps, tightness.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Model file; defaults to OUT/model.json, then the config's model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Aggregate trace files into one CSV row per run.
    Report {
        /// Trace CSV files.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Output directory for report.csv; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(base) = args.config.parent() {
        config.resolve_paths(base);
    }
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    let out = args.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok((config, out))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let progress = Progress { quiet: cli.quiet };
    if let Some(n) = harness::configure_threads()? {
        progress.note(format!("using at most {n} threads"));
    }
    match cli.command {
        Command::Generate(args) => {
            let (config, out) = load(&args)?;
            harness::run_generate(&config, &out, progress)?;
        }
        Command::Train(args) => {
            let (config, out) = load(&args)?;
            harness::run_train(&config, &out, progress)?;
        }
        Command::Verify { run, model } => {
            let (config, out) = load(&run)?;
            harness::run_verify(&config, &out, model.as_deref(), progress)?;
        }
        Command::Report { traces, out } => {
            harness::run_report(&traces, out.as_deref(), progress)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("efgen: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
