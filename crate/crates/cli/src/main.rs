mod commands;
mod data;
mod error;
mod model;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{DecomposeArgs, ExplainArgs, ImportanceArgs, ValidateArgs};
use error::{CliError, CliResult};

/// Exact functional ANOVA and Shapley attribution for categorical data.
#[derive(Debug, Parser)]
#[command(name = "cat-anova", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose a model's recorded outputs and write the model, diagnostics and norm table.
    Decompose(DecomposeArgs),
    /// Shapley attributions for query rows from a decomposition file.
    Explain(ExplainArgs),
    /// Features ranked by the L1 norm of their main effect.
    Importance(ImportanceArgs),
    /// Check the pipeline against brute-force references on random instances.
    Validate(ValidateArgs),
}

const THREADS_VAR: &str = "CAT_ANOVA_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Decompose(args) => commands::cmd_decompose(args),
        Command::Explain(args) => commands::cmd_explain(args),
        Command::Importance(args) => commands::cmd_importance(args),
        Command::Validate(args) => commands::cmd_validate(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
