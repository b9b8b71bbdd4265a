//! `exad` — explainable anomaly detection over ICS telemetry.
//!
//! Subcommands mirror the workflow: `train` fits the autoencoder and OCSVM on
//! the normal share of the data, `detect` classifies held-out windows,
//! `explain` attributes detected anomalies to features, `eval` scores stored
//! detections, `gridsearch` picks the window size.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure (diverged loss, solver non-convergence).

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "exad", version, about = "LSTM autoencoder + OCSVM anomaly detection with Shapley-style explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the autoencoder and OCSVM; write the model bundle and history.
    Train(CommonArgs),
    /// Classify held-out windows with a trained model.
    Detect(ModelArgs),
    /// Classify and attribute anomalies to features.
    Explain(ModelArgs),
    /// Score stored detections against dataset labels.
    Eval(EvalArgs),
    /// Evaluate candidate window sizes on a validation slice.
    Gridsearch(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Window length; overrides the config.
    #[arg(long = "window-size")]
    window_size: Option<usize>,
    /// Dataset format; overrides the config.
    #[arg(long, value_parser = ["csv", "arff"])]
    format: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model bundle; defaults to <out>/model.json.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Detections CSV; defaults to <out>/detections.csv.
    #[arg(long)]
    detections: Option<PathBuf>,
}

/// Anything a command can fail with, tagged for exit-code mapping.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(exad_core::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<exad_core::Error> for RunError {
    fn from(e: exad_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl RunError {
    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Core(exad_core::Error::NonFinite(_)) => "numeric",
            RunError::Core(_) => "data",
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Core(exad_core::Error::NonFinite(_)) => 3,
            RunError::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            RunError::Config(e) => e.to_string(),
            RunError::Core(e) => e.to_string(),
        }
    }
}

fn resolve_config(args: &CommonArgs) -> Result<(RunConfig, PathBuf), RunError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(size) = args.window_size {
        config.window.size = size;
    }
    if let Some(format) = &args.format {
        config.dataset.format = format.clone();
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    let out = config.output_dir.clone();
    Ok((config, out))
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Train(args) => {
            let (config, out) = resolve_config(&args)?;
            commands::train(&config, &out)
        }
        Command::Detect(args) => {
            let (config, out) = resolve_config(&args.common)?;
            let model = args.model.unwrap_or_else(|| commands::default_model_path(&out));
            commands::detect_command(&config, &out, &model)
        }
        Command::Explain(args) => {
            let (config, out) = resolve_config(&args.common)?;
            let model = args.model.unwrap_or_else(|| commands::default_model_path(&out));
            commands::explain_command(&config, &out, &model)
        }
        Command::Eval(args) => {
            let (config, out) = resolve_config(&args.common)?;
            let detections = args
                .detections
                .unwrap_or_else(|| commands::default_detections_path(&out));
            commands::eval_command(&config, &out, &detections)
        }
        Command::Gridsearch(args) => {
            let (config, out) = resolve_config(&args)?;
            commands::gridsearch_command(&config, &out)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders help/version on stdout with success; usage errors
            // go to stderr with exit 1.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(err) => {
            let message = err.message().replace('\n', " ");
            eprintln!(
                "exad: error kind={} exit={} message={:?}",
                err.kind(),
                err.exit_code(),
                message
            );
            std::process::exit(err.exit_code());
        }
    }
}
