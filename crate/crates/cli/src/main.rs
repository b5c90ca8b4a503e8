//! Command-line pipeline: run → report → validate → stats.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infrastructure
//! failure (unreachable endpoint, unwritable output).

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "simhra",
    version,
    about = "Multi-agent control-room simulation for team-level HRA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute one simulation run.
    Run(RunArgs),
    /// Execute a seeded batch of runs.
    Batch(BatchArgs),
    /// Extract metric sets from the completed runs in a directory.
    Report(ReportArgs),
    /// Gate every extracted run and print the validity summary.
    Validate(ValidateArgs),
    /// Descriptive statistics, alignment, attribution and radar data.
    Stats(StatsArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    Scripted,
    Llm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeratorChoice {
    Rules,
    Llm,
    Off,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ExtractorChoice {
    Rules,
    Llm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Default)]
enum Format {
    #[default]
    Table,
    Machine,
}

/// Endpoint settings shared by every command that may call a model.
#[derive(Args, Debug, Clone)]
struct LlmArgs {
    /// Base URL of an OpenAI-compatible API (the client appends /chat/completions).
    #[arg(long, env = "SIMHRA_API_BASE")]
    endpoint: Option<String>,
    /// Model name sent with every request.
    #[arg(long, default_value = "")]
    model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "SIMHRA_API_KEY")]
    api_key_env: String,
    /// Forward run seeds as a request parameter.
    #[arg(long)]
    send_seed: bool,
    /// Maximum concurrent requests.
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Builtin scenario id or path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    #[arg(long, value_enum, default_value_t = BackendChoice::Scripted)]
    backend: BackendChoice,
    /// Replay script for the scripted backend; defaults to the builtin script.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeratorChoice::Rules)]
    moderator: ModeratorChoice,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `<scenario>-s<seed>`.
    #[arg(long)]
    run_id: Option<String>,
    /// Replace an existing record with the same run id.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct BatchArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Overwrite an existing batch in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding a manifest written by `run` or `batch`.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, value_enum, default_value_t = ExtractorChoice::Rules)]
    extractor: ExtractorChoice,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// One or more run directories; each becomes a row of the summary.
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

/// A failed command with its exit code.
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }

    pub fn infra(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<simhra::engine::EngineError> for Failure {
    fn from(e: simhra::engine::EngineError) -> Self {
        if e.is_infrastructure() {
            Failure::infra(e)
        } else {
            Failure::usage(e)
        }
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
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Batch(a) => commands::batch(a),
        Command::Report(a) => commands::report(a),
        Command::Validate(a) => commands::validate(a),
        Command::Stats(a) => commands::stats(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
