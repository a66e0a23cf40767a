//! `vae-anomaly`: train, evaluate and score VAE anomaly detectors.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
//! numeric failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vae_anomaly::data::DatasetKind;
use vae_anomaly::nn::Architecture;

/// Configuration or input problem the user can fix; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(
    name = "vae-anomaly",
    version,
    about = "Pixel-level anomaly detection with VAE, VAE-GRF and ViT-VAE models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct DatasetArgs {
    /// Dataset root holding one directory per category.
    #[arg(long)]
    dataset_root: Option<PathBuf>,
    /// Category to use; repeat for several. Defaults to every category found.
    #[arg(long = "category")]
    categories: Vec<String>,
    /// Directory layout of the dataset.
    #[arg(long)]
    kind: Option<DatasetKind>,
}

#[derive(Args, Debug, Clone)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "VAE_AD_OUT_DIR", default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model per category.
    Train {
        /// TOML config, or a run manifest whose config is reused.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Model family: vae, vae-grf or vit-vae.
        #[arg(long)]
        arch: Option<Architecture>,
        /// Root seed for initialization, shuffling and sampling noise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compute pixel ROCAUC of trained checkpoints and write the report tables.
    Evaluate {
        /// Checkpoint to evaluate; repeat for several.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Training manifest naming the checkpoints, or a TOML config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Expected architecture; a checkpoint holding another one is an error.
        #[arg(long)]
        arch: Option<Architecture>,
        /// Report one AUC over all pooled test pixels instead of per-image statistics.
        #[arg(long)]
        pooled_auc: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write the anomaly maps and reconstruction of one image.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        image: PathBuf,
        /// TOML config or manifest supplying the SSIM settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// List the categories under a dataset root with their split sizes.
    ListDatasets {
        #[command(flatten)]
        dataset: DatasetArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<vae_anomaly::Error>() {
            use vae_anomaly::Error as E;
            return match e {
                E::Diverged { .. }
                | E::Numeric(_)
                | E::Candle(_)
                | E::Io { .. }
                | E::Symmetry { .. }
                | E::OracleTooLarge { .. }
                | E::NotRaw => 3,
                _ => 2,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train {
            config,
            dataset,
            arch,
            seed,
            epochs,
            batch_size,
            out,
        } => {
            let overrides = config::Overrides {
                architecture: arch,
                seed,
                epochs,
                batch_size,
                dataset_root: dataset.dataset_root,
                kind: dataset.kind,
                categories: dataset.categories,
            };
            commands::train(config.as_deref(), &overrides, &out.out)
        }
        Command::Evaluate {
            checkpoints,
            config,
            dataset,
            arch,
            pooled_auc,
            out,
        } => commands::evaluate(&commands::EvaluateArgs {
            checkpoints,
            config,
            dataset_root: dataset.dataset_root,
            categories: dataset.categories,
            kind: dataset.kind,
            arch,
            pooled: pooled_auc,
            out: out.out,
        }),
        Command::Score {
            checkpoint,
            image,
            config,
            out,
        } => commands::score(&checkpoint, &image, config.as_deref(), &out.out),
        Command::ListDatasets { dataset } => commands::list_datasets(
            dataset.dataset_root.as_deref(),
            dataset.kind.unwrap_or(DatasetKind::Mvtec),
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
