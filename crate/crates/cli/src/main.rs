mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use doctra::pipeline::RunConfig;
use doctra::Error;

/// Polarized group detection on attributed social graphs.
///
/// Settings are resolved as built-in defaults, then the `--config` JSON file,
/// then `--seed` and `--out`. The resolved config is written to
/// `<out>/config.json` and echoed as the first line of `<out>/report.jsonl`.
#[derive(Debug, Parser)]
#[command(name = "doctra", version)]
struct Cli {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `paths.out` (default `doctra-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic planted graph and its ground truth.
    Generate,
    /// Train the encoders and write checkpoints and history.
    Train,
    /// Soft-assign nodes with a trained encoder.
    Cluster,
    /// Classic and unified polarization indices for a trained encoder.
    Index,
    /// Ablation and semi-supervision table over synthetic suites.
    Eval,
    /// Tune prompt nodes against labels with the encoder frozen.
    PromptTune,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::Config(_) | Error::Argument(_) | Error::Io(_) => 2,
        Error::UnsupportedModel(_) => 2,
        Error::DegenerateData(_) | Error::DegenerateBatch(_) => 4,
        Error::Numerical(_) | Error::Divergence { .. } | Error::Fit(_) | Error::Evaluation(_) => 3,
    }
}

fn load_config(cli: &Cli) -> doctra::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.out = Some(out.clone());
    }
    cfg.resolved()
}

fn run(cli: &Cli) -> doctra::Result<()> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Index => commands::index(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::PromptTune => commands::prompt_tune(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
