//! `shotmem` command-line driver.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other failure
  2  usage error
  3  configuration error (bad config, missing input file, resume mismatch)
  4  invalid story script
  5  generation backend failure
  6  embedding or scoring provider failure
  7  run manifest missing, corrupt or incomplete
  8  shot index out of range

Environment:
  SHOTMEM_BACKEND_URL   remote backend endpoint when not set in the config
  SHOTMEM_PROVIDER_URL  provider sidecar endpoint when not set in the config
  RUST_LOG               log filter (default: info)";

#[derive(Parser)]
#[command(name = "shotmem", version, about = "Memory-conditioned multi-shot story generation", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every shot of a story and write a run directory.
    Generate(GenerateArgs),
    /// Compute story metrics for a completed run.
    Evaluate(EvaluateArgs),
    /// Show the memory bank after a given shot.
    InspectMemory(InspectArgs),
    /// Check a story script and print its shot list.
    ValidateScript(ValidateArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Story script (JSON).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Run configuration (TOML). Flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `mock`, `remote`, or a backend URL.
    #[arg(long)]
    pub backend: Option<String>,
    /// `mock`, `sidecar`, or a sidecar URL.
    #[arg(long)]
    pub providers: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reference images that seed the memory bank.
    #[arg(long, num_args = 1..)]
    pub refs: Vec<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue an interrupted run in `--out`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Run directory.
    pub run: PathBuf,
    /// Story script; defaults to the copy stored in the run.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Configuration for providers and evaluation; defaults to the run's.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub providers: Option<String>,
    /// Directory for metrics.json and pair_table.csv; defaults to the run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectArgs {
    /// Run directory.
    pub run: PathBuf,
    /// Zero-based shot index.
    #[arg(long)]
    pub shot: usize,
    /// Print the bank manifest as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub script: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::InspectMemory(a) => commands::inspect_memory(a),
        Command::ValidateScript(a) => commands::validate_script(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", exit::describe(&e));
            ExitCode::from(exit::classify(&e).code as u8)
        }
    }
}
