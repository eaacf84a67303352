mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "gpp", version, about = "Generative probabilistic planning for supply networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command. Flags override the config document.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory receiving artifacts and the manifest.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Monte-Carlo draws per planning call.
    #[arg(long)]
    pub mc_draws: Option<usize>,
    /// Planning horizon in weeks.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus into <out>/data.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        skus: Option<usize>,
    },
    /// Train the actor-critic on the train split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory of per-SKU dataset files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Pick the best risk preference per objective on validation weeks.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Monte-Carlo action plan for one SKU from one week.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sku: String,
        #[arg(long)]
        week: i64,
    },
    /// Test-week comparison of history, the rule, and the selected policies.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output of `validate`; supplies one preference per objective.
        #[arg(long, conflicts_with = "prefs")]
        selection: Option<PathBuf>,
        /// Explicit preference index per objective, comma separated.
        #[arg(long, value_delimiter = ',')]
        prefs: Option<Vec<usize>>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// CSV and JSON reports from an evaluation.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        evaluation: PathBuf,
    },
}

/// Failure with a stable kind for the error record.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            code: 2,
            message: m.into(),
        }
    }

    pub fn missing(m: impl Into<String>) -> Self {
        Self {
            kind: "missing_input",
            code: 3,
            message: m.into(),
        }
    }

    pub fn runtime(m: impl Into<String>) -> Self {
        Self {
            kind: "runtime",
            code: 1,
            message: m.into(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::runtime(format!("{e:#}"))
    }
}

fn fail(e: CliError, command: &str) -> ExitCode {
    let record = json!({"error": {"kind": e.kind, "command": command, "message": e.message}});
    eprintln!("{record}");
    ExitCode::from(e.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail(CliError::usage(e.to_string().trim().to_string()), "");
        }
    };
    let name = commands::name(&cli.command);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e, name),
    }
}
