//! `scribe`: synthesize ink, train, evaluate and recognize.
//!
//! Exit status is 0 on success, 1 for usage and config errors, 2 for data
//! errors and 3 when training diverges. Diagnostics go to standard error.

mod commands;
mod config;
mod error;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::RecognizeArgs;
use crate::config::{ExperimentConfig, Overrides};
use crate::error::{CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "scribe", version, about = "Online handwriting word recognition")]
struct Cli {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Log level for standard error.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dictionary, ink file and language-model corpus.
    Synth,
    /// Train a model on the configured ink and write it with its report.
    Train {
        /// Resume from this model file instead of a fresh initialization.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score the test split with and without the language model.
    Evaluate {
        /// Model file; defaults to model.scribe in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rank dictionary words for every sample of an ink file.
    Recognize {
        #[arg(long)]
        model: PathBuf,
        /// Ink file to recognize.
        ink: PathBuf,
        /// Dictionary file; defaults to the configured one.
        #[arg(long)]
        dictionary: Option<PathBuf>,
        /// Weight candidates by the bigram model trained on the configured corpus.
        #[arg(long)]
        lm: bool,
        /// Entries per sample; defaults to decode.top_k.
        #[arg(short)]
        k: Option<usize>,
    },
    /// Summarize a model, ink, report, metrics or config file as JSON.
    Inspect { path: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut overrides = Overrides {
        seed: cli.seed,
        output: cli.output,
    };
    if matches!(cli.command, Command::Evaluate { .. } | Command::Recognize { .. }) && overrides.seed.take().is_some() {
        log::warn!("--seed has no effect on inference");
    }
    let load = |o: &Overrides| ExperimentConfig::load(cli.config.as_deref(), o);
    match &cli.command {
        Command::Synth => commands::synth(&load(&overrides)?),
        Command::Train { checkpoint } => commands::train(&load(&overrides)?, checkpoint.as_deref()),
        Command::Evaluate { model } => commands::evaluate(&load(&overrides)?, model.as_deref()),
        Command::Recognize {
            model,
            ink,
            dictionary,
            lm,
            k,
        } => {
            let args = RecognizeArgs {
                model,
                ink,
                dictionary: dictionary.as_deref(),
                lm: *lm,
                k: *k,
            };
            commands::recognize(&load(&overrides)?, &args, &mut io::stdout().lock())
        }
        Command::Inspect { path } => {
            let summary = commands::inspect(path)?;
            let text = serde_json::to_string_pretty(&summary).map_err(scribe::Error::from)?;
            writeln!(io::stdout().lock(), "{text}").map_err(|source| scribe::Error::Io {
                path: "<stdout>".into(),
                source,
            })?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a reader such as `head` closing the pipe early is not a failure
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if !log::log_enabled!(log::Level::Error) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
