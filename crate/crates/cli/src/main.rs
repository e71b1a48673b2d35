use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowforge_cli::commands::{self, CliError};
use flowforge_cli::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "flowforge", version, about = "Workflow corpus pipeline")]
struct Cli {
    /// Pipeline configuration (TOML, or JSON by extension).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transcribe a recorded shortcut into a DSL sample.
    Transcribe(commands::TranscribeArgs),
    /// Backfill comments, a plan, and a query for a sample.
    Thoughts(commands::ThoughtsArgs),
    /// Synthesize a query for a category from sampled APIs.
    Expand(commands::ExpandArgs),
    /// Ask the model to polish a sample's plan and code.
    Refine(commands::RefineArgs),
    /// Filter a corpus through the rule-based validator.
    Validate(commands::ValidateArgs),
    /// Summary statistics over a corpus.
    Stats(commands::StatsArgs),
    /// Metric scores for candidates against references.
    Score(commands::ScoreArgs),
    /// Judged pass rate over a corpus.
    Passrate(commands::PassrateArgs),
    /// Agreement between two verdict files.
    Agreement(commands::AgreementArgs),
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = PipelineConfig::load(cli.config.as_deref())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match &cli.command {
        Command::Transcribe(args) => commands::cmd_transcribe(args, &cfg),
        Command::Thoughts(args) => commands::cmd_thoughts(args, &cfg),
        Command::Expand(args) => commands::cmd_expand(args, &cfg),
        Command::Refine(args) => commands::cmd_refine(args, &cfg),
        Command::Validate(args) => commands::cmd_validate(args, &cfg),
        Command::Stats(args) => commands::cmd_stats(args, &cfg),
        Command::Score(args) => commands::cmd_score(args, &cfg),
        Command::Passrate(args) => commands::cmd_passrate(args, &cfg),
        Command::Agreement(args) => commands::cmd_agreement(args, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(payload) => {
            print!("{payload}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
