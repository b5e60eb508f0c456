//! Reproducible pipeline over the core library: demo data, generative model
//! training, metric evaluation, EM policy training, correlation and a
//! markdown summary. Every command reads one JSON config (all fields
//! defaulted), writes its outputs to `--out`, and leaves a run manifest.

pub mod commands;
pub mod config;
pub mod failure;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "genrl", version, about = "Latent-action generative models and EM policy training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON config; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Comma-separated metrics for `eval` (pr, dipr, dwpr, l3, all).
    #[arg(long, global = true)]
    pub metrics: Option<String>,
    /// Worker threads for independent jobs.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate a demonstration dataset.
    GenData,
    /// Train a VAE or InfoGAN (or the full grid).
    TrainModel,
    /// Evaluate model files with the selected metrics.
    Eval,
    /// Train latent policies with EM and label each model.
    TrainPolicy,
    /// Correlate metric reports with model labels.
    Correlate,
    /// Summarize reports and correlations as markdown.
    Report,
}

/// Runs one command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("genrl: {f}");
            f.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.common.jobs == 0 {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::GenData => commands::gen_data::run(&cli.common),
        Command::TrainModel => commands::train_model::run(&cli.common),
        Command::Eval => commands::eval::run(&cli.common),
        Command::TrainPolicy => commands::train_policy::run(&cli.common),
        Command::Correlate => commands::correlate::run(&cli.common),
        Command::Report => commands::report::run(&cli.common),
    }
}
