//! Subcommand front end: `synth`, `preprocess`, `label`, `split`, `train`,
//! `evaluate`, `profile` and `curves`. Every command writes a
//! `manifest.json` beside its outputs.

mod commands;
mod experiment;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_curves, cmd_evaluate, cmd_label, cmd_preprocess, cmd_profile, cmd_split, cmd_synth, cmd_train, RunInfo,
    SplitsFile, EXCLUDED_FILE, LABELS_FILE, MODEL_CONFIG_FILE, PREDICTIONS_FILE, REPORT_FILE, RUN_FILE, SPLITS_FILE,
    TRAIN_CONFIG_FILE,
};
pub use experiment::ExperimentConfig;
pub use manifest::{digest_manifest, sha256_hex, FileDigest, Manifest, MANIFEST_FILE};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "volformer", version, about = "Slice-wise transformer models for knee MRI progression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: raw volumes and cohort.csv.
    Synth(SynthArgs),
    /// Crop, quantize and downsample every volume in a directory.
    Preprocess(PreprocessArgs),
    /// Derive progression labels and apply exclusions.
    Label(LabelArgs),
    /// Hold out one institution and assign folds subject-wise.
    Split(SplitArgs),
    /// Train one fold or all folds of an experiment.
    Train(TrainArgs),
    /// Ensemble fold snapshots on the hold-out institution.
    Evaluate(EvaluateArgs),
    /// Count parameters and MACs, optionally time inference.
    Profile(ProfileArgs),
    /// Re-export ROC, PR and confusion CSVs from a report.
    Curves(CurvesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub institutions: usize,
    #[arg(long)]
    pub exclusion_rate: Option<f64>,
    /// Cartilage lost per class step, in mm.
    #[arg(long)]
    pub thinning_mm: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also reproject into this view.
    #[arg(long)]
    pub view: Option<String>,
    /// Crop extents as AxBxC.
    #[arg(long)]
    pub crop: Option<String>,
    /// Integer downsampling factors as AxBxC.
    #[arg(long)]
    pub factors: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// Directory whose `{knee}.vvol` files mark imaging as available.
    #[arg(long)]
    pub volumes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub volumes: PathBuf,
    #[arg(long)]
    pub holdout: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Train only this fold; all folds otherwise.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel_folds: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Output directory of `train`.
    #[arg(long)]
    pub snapshots: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the volume directory recorded by `train`.
    #[arg(long)]
    pub volumes: Option<PathBuf>,
    #[arg(long, default_value_t = crate::eval::DEFAULT_BOOTSTRAP)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Model family; ignored when --config is given.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `full` or `toy`, used with --family.
    #[arg(long, default_value = "full")]
    pub preset: String,
    /// Input stack as KxHxW, applied to every configured view.
    #[arg(long)]
    pub input: Option<String>,
    /// Also time single-sample inference.
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value_t = 30)]
    pub runs: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    /// JSON report path; the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit status for an error: 2 configuration, 3 data, 4 divergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Divergence(_) => 4,
        Error::Shape { .. }
        | Error::Parse { .. }
        | Error::Row { .. }
        | Error::Load(_)
        | Error::Data(_)
        | Error::MissingView(_)
        | Error::UndefinedMetric(_)
        | Error::Io { .. } => 3,
    }
}

pub fn execute(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Label(a) => cmd_label(&a),
        Command::Split(a) => cmd_split(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Profile(a) => cmd_profile(&a),
        Command::Curves(a) => cmd_curves(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
