//! `kws` — train and evaluate noise-robust keyword classifiers.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kws_core::Error;

#[derive(Parser)]
#[command(
    name = "kws",
    version,
    about = "Noise-robust keyword spotting: augmentation, training, noise-grid evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by data-consuming subcommands. Values given here override
/// the config file.
#[derive(Args, Debug, Clone, Default)]
struct DataArgs {
    /// TOML config file; flag values override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keyword corpus root (one subdirectory per class).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Pre-built JSON-lines manifest (paths relative to --data-dir).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Official validation list (relative paths, one per line).
    #[arg(long)]
    val_list: Option<PathBuf>,
    /// Official test list.
    #[arg(long)]
    test_list: Option<PathBuf>,
    /// Noise bank directory.
    #[arg(long)]
    noise_dir: Option<PathBuf>,
    /// Class subset: 10, 35 or custom (members from the config file).
    #[arg(long)]
    subset: Option<String>,
    /// Global seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for checkpoints and metrics.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Encoder architecture: conv_residual or attention.
    #[arg(long)]
    encoder: Option<String>,
    /// Regularizer row: none, intra or i2cr.
    #[arg(long)]
    regularizer: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Resume from a checkpoint base path (its .bin/.json pair).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint base path (reads <base>.bin and <base>.json).
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Comma-separated SNRs in dB, e.g. "-10,-5,0,20".
    #[arg(long, allow_hyphen_values = true)]
    snrs: Option<String>,
    /// Label recorded in the report (the trained row: none, intra, i2cr).
    #[arg(long)]
    regularizer: Option<String>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// "clean" or "<source>@<snr>"; source "any" draws from the whole bank.
    #[arg(long, default_value = "clean", allow_hyphen_values = true)]
    condition: String,
    /// Output base path; writes <base>.mat, <base>.labels.jsonl, <base>.meta.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write a 2-D PCA projection to <base>.pca.csv.
    #[arg(long)]
    project: bool,
}

#[derive(Args, Debug)]
struct MixDemoArgs {
    /// Speech WAV.
    #[arg(long)]
    speech: PathBuf,
    /// Noise WAV (tiled or truncated to the speech length).
    #[arg(long)]
    noise: PathBuf,
    /// Target SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    /// Output WAV (16-bit PCM).
    #[arg(long)]
    out: PathBuf,
    /// Optional log-mel dump of the mixture (binary matrix).
    #[arg(long)]
    features_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MakeManifestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output file (JSON-lines).
    #[arg(long)]
    out: PathBuf,
    /// Scan a noise bank instead of a keyword corpus.
    #[arg(long)]
    noise: bool,
    /// Noise partition tag: train or eval.
    #[arg(long, default_value = "train")]
    partition: String,
    /// Category mapping "pattern=category"; repeatable, first match wins.
    #[arg(long = "category")]
    categories: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier with dual-view augmentation.
    Train(TrainArgs),
    /// Accuracy grid over noise sources and SNRs.
    Evaluate(EvaluateArgs),
    /// Dump test-set latent vectors under a noise condition.
    ExportEmbeddings(ExportArgs),
    /// Mix speech and noise at an exact SNR for manual inspection.
    MixDemo(MixDemoArgs),
    /// Scan a corpus or noise bank into a manifest file.
    MakeManifest(MakeManifestArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::ExportEmbeddings(args) => commands::export_embeddings(args),
        Command::MixDemo(args) => commands::mix_demo(args),
        Command::MakeManifest(args) => commands::make_manifest(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
