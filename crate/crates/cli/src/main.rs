//! `tabuq`: synthesise tables, augment images, run mock predictors, ensemble
//! predictions and evaluate the resulting confidences.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tabuq_core::{Augmentation, FusionRule, MaskScope};

#[derive(Debug, Parser)]
#[command(
    name = "tabuq",
    version,
    about = "Per-cell uncertainty for table structure recognition"
)]
struct Cli {
    /// IoU threshold for clustering and matching.
    #[arg(long, global = true, default_value_t = 0.5, value_parser = parse_unit)]
    theta0: f64,
    /// Seed for synthesis and the default predictor bank.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    parallel: u32,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with images and pixel masks.
    Synth(SynthArgs),
    /// Write an augmented copy of every page image.
    Augment(AugmentArgs),
    /// Convert ICDAR table XML files into a dataset.
    ImportIcdar(ImportArgs),
    /// Run the mock predictor bank and write per-table predictions.
    PredictMock(PredictArgs),
    /// Merge per-model predictions into cells with confidences.
    Ensemble(EnsembleArgs),
    /// Score merged cells against ground truth.
    Eval(EvalArgs),
    /// Predict, ensemble, evaluate and sweep masking in one go.
    Run(RunArgs),
    /// Confidence-accuracy curves under intensity masking.
    MaskEval(MaskEvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    rows: u32,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    cols: u32,
    /// Number of tables.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0.15, value_parser = parse_unit)]
    span_prob: f64,
    #[arg(long, default_value_t = 80)]
    cell_w: u32,
    #[arg(long, default_value_t = 30)]
    cell_h: u32,
    #[arg(long, default_value_t = 8)]
    gap: u32,
    #[arg(long, default_value_t = 12)]
    margin: u32,
    #[arg(long, default_value_t = 0.8, value_parser = parse_unit)]
    glyph_density: f64,
    /// Omit ruling lines.
    #[arg(long)]
    no_lines: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Whole,
    Cell,
}

impl From<ScopeArg> for MaskScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Whole => MaskScope::WholeImage,
            ScopeArg::Cell => MaskScope::PerCell,
        }
    }
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Dataset JSON whose page images are augmented.
    #[arg(long)]
    dataset: PathBuf,
    /// nlt, hlt, vlt, hvlt, mask2, mask3 or original.
    #[arg(long, value_parser = parse_augmentation)]
    aug: Augmentation,
    /// Region scaled by mask2/mask3.
    #[arg(long, value_enum, default_value_t = ScopeArg::Whole)]
    mask_scope: ScopeArg,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// ICDAR XML files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "icdar")]
    split: String,
}

#[derive(Debug, Args)]
struct BankArgs {
    /// Predictor bank file; the built-in five-model bank when omitted.
    #[arg(long)]
    bank: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    bank: BankArgs,
    /// Intensity factor applied before prediction.
    #[arg(long, default_value_t = 1.0, value_parser = parse_factor)]
    mask_factor: f64,
    #[arg(long, value_enum, default_value_t = ScopeArg::Whole)]
    mask_scope: ScopeArg,
}

#[derive(Debug, Args)]
struct EnsembleOpts {
    /// Drop boxes lying inside a much larger box before merging.
    #[arg(long)]
    filter: bool,
    /// Largest area ratio removed by the filter.
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit)]
    kappa: f64,
    #[arg(long, value_enum, default_value_t = FusionArg::Mean)]
    fusion: FusionArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FusionArg {
    Mean,
    Union,
    Base,
}

impl From<FusionArg> for FusionRule {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Mean => FusionRule::Mean,
            FusionArg::Union => FusionRule::Union,
            FusionArg::Base => FusionRule::Base,
        }
    }
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Predictions file, or a directory of them.
    #[arg(long)]
    predictions: PathBuf,
    #[command(flatten)]
    opts: EnsembleOpts,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Merged-cell file, or a directory of them.
    #[arg(long)]
    merged: PathBuf,
    /// Ground-truth dataset JSON.
    #[arg(long)]
    gt: PathBuf,
    /// Per-model predictions (file or directory) to add rows to prf.csv.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset JSON; a synthetic dataset is generated when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Tables to synthesise when no dataset is given.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[command(flatten)]
    bank: BankArgs,
    #[command(flatten)]
    opts: EnsembleOpts,
    /// Masking factors for the sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_factor)]
    factors: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ScopeArg::Whole)]
    mask_scope: ScopeArg,
}

#[derive(Debug, Args)]
struct MaskEvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    bank: BankArgs,
    #[command(flatten)]
    opts: EnsembleOpts,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_factor)]
    factors: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ScopeArg::Whole)]
    mask_scope: ScopeArg,
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_factor(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 1.0 {
        Ok(v)
    } else {
        Err(format!("mask factor must be >= 1, got {v}"))
    }
}

fn parse_augmentation(s: &str) -> Result<Augmentation, String> {
    Augmentation::from_name(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
