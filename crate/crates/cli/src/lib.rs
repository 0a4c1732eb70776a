//! The `wavedenoise` command line: train, denoise, evaluate, corrupt,
//! analyze and phantom.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 non-finite
//! loss, 5 shape violation.

mod commands;
mod listing;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wavedenoise_core::{Error, ErrorClass};

pub use commands::{analyze, corrupt, denoise, evaluate, phantom, train};
pub use listing::{list_images, Listed};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WAVEDENOISE_OUT_DIR";

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_SHAPE: u8 = 5;

pub fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numeric => EXIT_NUMERIC,
        ErrorClass::Shape => EXIT_SHAPE,
    }
}

/// Outcome of one command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: u8,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl CommandResult {
    pub fn ok(artifacts: Vec<PathBuf>, summary: impl Into<String>) -> Self {
        Self { exit_code: 0, artifacts, summary: summary.into() }
    }

    pub fn from_error(e: &Error) -> Self {
        Self { exit_code: exit_code(e.class()), artifacts: Vec::new(), summary: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wavedenoise", version, about = "Self-supervised image denoising with wavelet-domain corruption")]
#[command(after_help = "Exit codes: 0 ok, 2 config error, 3 data error, 4 non-finite loss, 5 shape violation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a denoiser from a TOML config.
    Train(TrainArgs),
    /// Denoise one image or every image in a directory.
    Denoise(DenoiseArgs),
    /// Compare test images with references: PSNR, SSIM, NPS, subband MSE.
    Evaluate(EvaluateArgs),
    /// Add wavelet-domain noise to an image.
    Corrupt(CorruptArgs),
    /// Per-subband differences between two images.
    Analyze(AnalyzeArgs),
    /// Generate synthetic phantoms, optionally with low-dose counterparts.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for checkpoints, loss.log and the resolved config.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set trainer.lambda_fam=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Checkpoint to load.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Image file or directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of reference images.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Directory of test images; matched to references by source or id.
    #[arg(long)]
    pub test: PathBuf,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Peak value for PSNR and SSIM [default: span of each reference's intensity range]
    #[arg(long)]
    pub peak: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output image; a `<stem>.noise.toml` report is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Named σ preset (mayo2016, mayo2020); explicit σ flags override it.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub sigma_ll: Option<f64>,
    #[arg(long)]
    pub sigma_lh: Option<f64>,
    #[arg(long)]
    pub sigma_hl: Option<f64>,
    #[arg(long)]
    pub sigma_hh: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
    /// Also write low-dose versions at this dose fraction into `<out>/ldct`.
    #[arg(long, value_name = "DOSE")]
    pub simulate_ldct: Option<f64>,
}

pub fn run(cli: Cli) -> CommandResult {
    let r = match cli.command {
        Command::Train(a) => train(&a),
        Command::Denoise(a) => denoise(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Corrupt(a) => corrupt(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Phantom(a) => phantom(&a),
    };
    r.unwrap_or_else(|e| CommandResult::from_error(&e))
}
