//! `uaed`: synthetic data, training, prediction, evaluation and plots for
//! uncertainty-aware edge detection.
//!
//! Every subcommand writes its outputs plus a `manifest.json` into one output
//! directory. Without `--out` that directory is `$UAED_OUT/<subcommand>`
//! (or `runs/<subcommand>` when the variable is unset).

mod cmd;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "UAED_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "uaed", version, about = "Uncertainty-aware edge detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-annotator dataset from a JSON config.
    Synth(cmd::synth::Args),
    /// Train a model from a JSON config on a dataset directory.
    Train(cmd::train::Args),
    /// Predict edge and uncertainty maps for one image or a directory of images.
    Predict(cmd::predict::Args),
    /// Score predicted edge maps against a dataset's annotations.
    Eval(cmd::eval::Args),
    /// Draw the PR curve of an evaluation and/or uncertainty overlays of predictions.
    Plot(cmd::plot::Args),
}

/// Output directory shared by all subcommands.
#[derive(Debug, clap::Args)]
pub struct OutArg {
    /// Output directory [default: $UAED_OUT/<subcommand>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArg {
    pub fn resolve(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
                .join(command)
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match cli.command {
        Command::Synth(a) => cmd::synth::run(a, started),
        Command::Train(a) => cmd::train::run(a, started),
        Command::Predict(a) => cmd::predict::run(a, started),
        Command::Eval(a) => cmd::eval::run(a, started),
        Command::Plot(a) => cmd::plot::run(a, started),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
