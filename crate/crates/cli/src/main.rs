//! `vila`: preprocessing, pretraining, fine-tuning, evaluation and
//! dataset-indicator commands over a spectrogram store.

mod commands;
mod config;
mod manifest;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "vila", version, about = "Audio-to-vibration transfer toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. 0 uses every core for preprocessing and one thread
    /// for training.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory for artifacts and `run.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Write a synthetic WAV corpus and its manifest.
    GenSynthetic,
    /// Turn every manifest entry into a SPEC1 spectrogram.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        /// Store directory (default: $VILA_CACHE, else the output directory).
        #[arg(long, env = "VILA_CACHE")]
        store: Option<PathBuf>,
    },
    /// Masked-autoencoder pretraining on the store's pretrain split.
    Pretrain {
        #[arg(long, env = "VILA_CACHE")]
        store: PathBuf,
    },
    /// Supervised fine-tuning on the store's train split.
    Finetune {
        #[arg(long, env = "VILA_CACHE")]
        store: PathBuf,
        /// Pretrained checkpoint; omitted means training from scratch.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Accuracy of one or more fine-tuned checkpoints on the eval split.
    Evaluate {
        #[arg(long, env = "VILA_CACHE")]
        store: PathBuf,
        /// `name=path` or `path`; repeatable.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
    },
    /// Per-item similarity and diversity scores with group assignments.
    Indicators {
        #[arg(long, env = "VILA_CACHE")]
        store: PathBuf,
        #[arg(long, value_enum, default_value = "eval")]
        items: SplitArg,
        #[arg(long, value_enum, default_value = "train")]
        reference: SplitArg,
        /// Pretrained checkpoint used for reconstruction.
        #[arg(long)]
        model: PathBuf,
    },
    /// Split a manifest into groups using an indicator report.
    Sort {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        by: SortBy,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Pretrain,
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SortBy {
    Similarity,
    Diversity,
    Nested,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
