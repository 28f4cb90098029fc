//! `tcct` — train, evaluate, and benchmark the two-stream engagement
//! classifier on CSV signal datasets.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchArgs, CmdError, ScalogramArgs, SynthArgs, EXIT_CONFIG};
use config::RunConfig;
use tcct_core::data::Split;

#[derive(Parser)]
#[command(
    name = "tcct",
    about = "Two-stream (convolution-transformer + wavelet-CNN) engagement classifier",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a metrics CSV.
    Train {
        /// Run configuration file (flat `section.key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. --set train.seed=7 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint: accuracy and confusion matrix.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset split to evaluate.
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Classify a single sample CSV.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sample CSV (header of feature names, one row per frame).
        #[arg(long)]
        sample: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Measure inference latency and training-epoch wall time.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Warmup iterations excluded from statistics.
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Measured per-sample iterations.
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value = "val")]
        split: String,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Export a sample's wavelet scalogram (per-feature magnitude rows).
    Scalogram {
        #[arg(long)]
        sample: PathBuf,
        /// Comma-separated feature names.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        scales: usize,
        #[arg(long, default_value_t = 0.1)]
        min_freq: f64,
        #[arg(long, default_value_t = 15.0)]
        max_freq: f64,
        #[arg(long, default_value_t = 30.0)]
        sampling_rate: f64,
    },
    /// Generate a synthetic four-class dataset plus a ready-to-run config.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        train_per_class: usize,
        #[arg(long, default_value_t = 25)]
        val_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixture difficulty: separable | overfit.
        #[arg(long, default_value = "separable")]
        preset: String,
    },
}

fn parse_split(s: &str) -> Result<Split, CmdError> {
    s.parse::<Split>()
        .map_err(|e| CmdError::config(e.to_string()))
}

fn run() -> Result<(), CmdError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_train(&cfg)
        }
        Command::Eval {
            config,
            checkpoint,
            split,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_eval(&cfg, &checkpoint, parse_split(&split)?)
        }
        Command::Infer {
            config,
            checkpoint,
            sample,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_infer(&cfg, &checkpoint, &sample)
        }
        Command::Bench {
            config,
            checkpoint,
            warmup,
            iters,
            split,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::cmd_bench(
                &cfg,
                &checkpoint,
                &BenchArgs {
                    warmup,
                    iters,
                    split: parse_split(&split)?,
                    out_csv: out,
                },
            )
        }
        Command::Scalogram {
            sample,
            features,
            out,
            scales,
            min_freq,
            max_freq,
            sampling_rate,
        } => commands::cmd_scalogram(&ScalogramArgs {
            sample,
            features,
            out,
            scales,
            min_freq,
            max_freq,
            sampling_rate,
        }),
        Command::Synth {
            out,
            train_per_class,
            val_per_class,
            seed,
            preset,
        } => commands::cmd_synth(&SynthArgs {
            out,
            train_per_class,
            val_per_class,
            seed,
            preset,
        }),
    }
}

fn load_config(path: &std::path::Path, overrides: &[String]) -> Result<RunConfig, CmdError> {
    RunConfig::load(path, overrides).map_err(|e| CmdError {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
