//! `colex`: one entry point for the whole pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use colex_core::agents::StrategyKind;
use colex_core::Condition;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "colex", version, about = "Stimuli, schedules, simulation, analysis and serving for colexification games")]
pub struct Cli {
    /// Master seed. Drawn at random and printed when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config (TOML). Supplies defaults for condition, signal
    /// count, lexicon paths, seed and server settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a meaning space and signal set.
    Stimgen(StimgenArgs),
    /// Build a trial schedule for a stimulus bundle.
    Schedule(ScheduleArgs),
    /// Play games with simulated agents.
    Simulate(SimulateArgs),
    /// Compute accuracy, cases, entropy, costs and the fixed-effects fit.
    Analyze(AnalyzeArgs),
    /// Run the experiment server.
    Serve(ServeArgs),
    /// Re-execute logs through the engine and report violations.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// Lexicon TSV; the bundled one by default.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Word list used to reject real-word signals.
    #[arg(long)]
    pub wordlist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StimgenArgs {
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub n_signals: Option<usize>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[arg(long, default_value = "stimulus.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub stimulus: PathBuf,
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long, default_value = "schedule.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Naming-model grid over strategies and signal-set sizes instead of
    /// two-agent games.
    #[arg(long)]
    pub grid: bool,
    /// Stimulus bundle to play with. Generated from the seed when omitted.
    #[arg(long)]
    pub stimulus: Option<PathBuf>,
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub n_signals: Option<usize>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    /// Grid strategies, comma separated; all by default.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<StrategyKind>,
    /// Runs per grid cell.
    #[arg(long, default_value_t = 20)]
    pub repeats: u32,
    /// Player A's strategy in two-agent games.
    #[arg(long, default_value = "rational_full")]
    pub strategy_a: StrategyKind,
    /// Player B's strategy; same as A when omitted.
    #[arg(long)]
    pub strategy_b: Option<StrategyKind>,
    /// Number of two-agent games.
    #[arg(long, default_value_t = 20)]
    pub dyads: usize,
    #[arg(long, default_value = "sim")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory of dyad directories, each with log.jsonl and stimulus.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
    /// Correct post-burn-in guesses needed for inclusion.
    #[arg(long, default_value_t = colex_core::analysis::DEFAULT_MIN_CORRECT)]
    pub min_correct: u32,
    /// Also take cases from complete dyads below the threshold.
    #[arg(long)]
    pub include_below_threshold: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Dyad directories, or directories containing them.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{msg}");
            ExitCode::from(e.code())
        }
    }
}
