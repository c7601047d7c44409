//! `magic`: score essay corpora with a single-prompt baseline or a
//! five-trait multi-agent pipeline, then evaluate the results — agreement
//! metrics, pairwise feedback battles, and annotator statistics — against
//! any OpenAI-compatible chat endpoint or a scripted offline stand-in.
//!
//! Exit codes: 0 success, 1 domain/validation failure (bad config, corpus
//! contents, unsatisfiable request), 2 environment failure (missing files,
//! unreachable endpoint, I/O).

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use config::{ModeChoice, OrdersChoice, Overrides, RunConfig};
use error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "magic", version, about = "Multi-agent essay scoring and evaluation")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Scoring mode; overrides the config file.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeChoice>,

    /// Name for this run; defaults to a mode-stamped UTC timestamp.
    #[arg(long, global = true, value_name = "ID")]
    run_id: Option<String>,

    /// Directory for run outputs; overrides the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Response cache directory; overrides the config file.
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,

    /// Judge presentation orders per pair; overrides the config file.
    #[arg(long, global = true, value_enum)]
    orders: Option<OrdersChoice>,

    /// Debug-level progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file and print how many records and prompts it holds.
    Validate {
        /// Corpus to check; the configured corpus otherwise.
        corpus: Option<PathBuf>,
    },
    /// Score every essay and persist verdicts under the output directory.
    Score,
    /// Render evaluation tables from persisted runs; entirely offline.
    Report {
        /// Run directories produced by `score`.
        runs: Vec<PathBuf>,
        /// Also write the report as JSON lines to this path.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Judge feedback pairs between participants and print win rates.
    Arena,
    /// Compute annotator and judge agreement statistics from files.
    Agreement,
}

fn init_logging(verbose: bool) {
    let default = if verbose { "debug" } else { "info" };
    // Progress goes to stderr so stdout stays clean for results.
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp(None)
        .init();
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        mode: cli.mode,
        out_dir: cli.out_dir.clone(),
        cache_dir: cli.cache_dir.clone(),
        orders: cli.orders,
    };
    let load = || -> Result<RunConfig, CliError> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| CliError::domain("--config is required for this command"))?;
        RunConfig::load(path, &overrides)
    };
    match &cli.command {
        Command::Validate { corpus } => {
            let path = match corpus {
                Some(path) => path.clone(),
                None => load()?.corpus_path,
            };
            commands::validate::run(&path)
        }
        Command::Score => commands::score::run(&load()?, cli.run_id.as_deref()),
        Command::Report { runs, out } => {
            let dirs: Vec<&std::path::Path> = runs.iter().map(PathBuf::as_path).collect();
            commands::report::run(&load()?, &dirs, out.as_deref())
        }
        Command::Arena => commands::arena::run(&load()?, cli.run_id.as_deref()),
        Command::Agreement => commands::agreement::run(&load()?),
    }
}

fn main() {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if let Err(err) = dispatch(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
