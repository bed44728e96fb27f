//! Command-line argument types. The subcommand enum is also the serializable
//! job description: a parsed job round-trips losslessly through JSON.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ribreg_core::engine::{OptimizerKind, PenalizationMode, RegistrationConfig};
use ribreg_core::metrics::MetricsReport;
use ribreg_core::qc::QcThresholds;
use ribreg_core::stats::Orientation;

#[derive(Debug, Parser)]
#[command(
    name = "ribreg",
    about = "Deformable chest-radiograph registration toolkit",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub job: JobConfig,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
pub enum JobConfig {
    /// Register a moving image onto a fixed image
    Register(RegisterArgs),
    /// Render the histogram-matched difference image of a registered pair
    Diff(DiffArgs),
    /// Compute overlap, similarity and folding metrics for a registered pair
    Metrics(MetricsArgs),
    /// Quality-check rib-pair masks
    Qc(QcArgs),
    /// Compare per-model metric reports with non-parametric tests
    Stats(StatsArgs),
    /// Generate a synthetic phantom, optionally with a known deformation
    Phantom(PhantomArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Unsup,
    Lung,
    Ribcage,
    Ribpairs,
}

impl ModeArg {
    pub fn to_mode(self) -> PenalizationMode {
        match self {
            ModeArg::Unsup => PenalizationMode::Unsupervised,
            ModeArg::Lung => PenalizationMode::Lung,
            ModeArg::Ribcage => PenalizationMode::RibCage,
            ModeArg::Ribpairs => PenalizationMode::RibPairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Adam,
    Gd,
}

impl OptimizerArg {
    pub fn to_kind(self) -> OptimizerKind {
        match self {
            OptimizerArg::Adam => OptimizerKind::adam_default(),
            OptimizerArg::Gd => OptimizerKind::GradientDescent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RegisterArgs {
    /// Moving image (8/16-bit grayscale PNG)
    #[arg(long)]
    pub moving: PathBuf,
    /// Fixed image (8/16-bit grayscale PNG)
    #[arg(long)]
    pub fixed: PathBuf,
    /// Moving-image mask, required by the penalized modes
    #[arg(long)]
    pub moving_mask: Option<PathBuf>,
    /// Fixed-image mask, required by the penalized modes
    #[arg(long)]
    pub fixed_mask: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unsup")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 64)]
    pub stage1_size: usize,
    #[arg(long, default_value_t = 128)]
    pub stage2_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 3.0)]
    pub lambda_seg: f64,
    #[arg(long, default_value_t = 6e-5)]
    pub lambda_r1: f64,
    #[arg(long, default_value_t = 3e-5)]
    pub lambda_r2: f64,
    #[arg(long, default_value_t = 400)]
    pub iters1: usize,
    #[arg(long, default_value_t = 400)]
    pub iters2: usize,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (defaults to $RIBREG_OUT, then .)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output file prefix
    #[arg(long, default_value = "reg")]
    pub prefix: String,
}

impl RegisterArgs {
    pub fn to_config(&self) -> RegistrationConfig {
        RegistrationConfig {
            stage1_size: self.stage1_size,
            stage2_size: self.stage2_size,
            lr: self.lr,
            lambda_seg: self.lambda_seg,
            lambda_r_stage1: self.lambda_r1,
            lambda_r_stage2: self.lambda_r2,
            iters_stage1: self.iters1,
            iters_stage2: self.iters2,
            optimizer: self.optimizer.to_kind(),
            mode: self.mode.to_mode(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DiffArgs {
    /// Fixed image
    #[arg(long)]
    pub fixed: PathBuf,
    /// Already-warped moving image; alternative to --moving + --field
    #[arg(long)]
    pub warped: Option<PathBuf>,
    /// Moving image, warped in-process with --field
    #[arg(long, requires = "field")]
    pub moving: Option<PathBuf>,
    /// DFLD displacement field for --moving
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Binary rib-cage mask defining the region of interest
    #[arg(long)]
    pub ribcage: PathBuf,
    /// Convex-hull margin in pixels
    #[arg(long, default_value_t = 20.0)]
    pub margin: f64,
    /// Also write the signed difference as a 16-bit raster
    #[arg(long, default_value_t = false)]
    pub signed16: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "diff")]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub warped: PathBuf,
    #[arg(long)]
    pub fixed: PathBuf,
    /// DFLD field the warped image was produced with (for the folding metric)
    #[arg(long)]
    pub field: PathBuf,
    /// Pre-warped rib mask; alternative to --moving-ribs
    #[arg(long, requires = "fixed_ribs", conflicts_with = "moving_ribs")]
    pub warped_ribs: Option<PathBuf>,
    /// Moving-image rib mask, warped in-process with --field
    #[arg(long, requires = "fixed_ribs")]
    pub moving_ribs: Option<PathBuf>,
    #[arg(long)]
    pub fixed_ribs: Option<PathBuf>,
    /// Pre-warped lung mask; alternative to --moving-lungs
    #[arg(long, requires = "fixed_lungs", conflicts_with = "moving_lungs")]
    pub warped_lungs: Option<PathBuf>,
    /// Moving-image lung mask, warped in-process with --field
    #[arg(long, requires = "fixed_lungs")]
    pub moving_lungs: Option<PathBuf>,
    #[arg(long)]
    pub fixed_lungs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "pair")]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct QcArgs {
    /// Rib-pair mask files (8-bit grayscale PNG)
    pub masks: Vec<PathBuf>,
    /// Directory of mask PNGs to check in addition to the positional files
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub t_q1: u32,
    #[arg(long, default_value_t = 30.0)]
    pub t_q3: f64,
    #[arg(long, default_value_t = 50)]
    pub t_q4: u32,
    /// Worker threads for batch checking
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl QcArgs {
    pub fn thresholds(&self) -> QcThresholds {
        QcThresholds {
            t_q1: self.t_q1,
            t_q3: self.t_q3,
            t_q4: self.t_q4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Dcr,
    H95r,
    Dcl,
    H95l,
    Mse,
    Ssim,
    Negjac,
}

impl MetricArg {
    pub fn name(self) -> &'static str {
        match self {
            MetricArg::Dcr => "dcr",
            MetricArg::H95r => "h95r",
            MetricArg::Dcl => "dcl",
            MetricArg::H95l => "h95l",
            MetricArg::Mse => "mse",
            MetricArg::Ssim => "ssim",
            MetricArg::Negjac => "negjac",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            MetricArg::Dcr | MetricArg::Dcl | MetricArg::Ssim => Orientation::HigherIsBetter,
            _ => Orientation::LowerIsBetter,
        }
    }

    pub fn extract(self, report: &MetricsReport) -> Option<f64> {
        match self {
            MetricArg::Dcr => report.dcr,
            MetricArg::H95r => report.h95r,
            MetricArg::Dcl => report.dcl,
            MetricArg::H95l => report.h95l,
            MetricArg::Mse => Some(report.mse),
            MetricArg::Ssim => Some(report.ssim),
            MetricArg::Negjac => Some(report.negjac),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StatsArgs {
    /// One directory per model, each holding per-subject metrics records;
    /// subjects are matched across models by file name
    #[arg(required = true, num_args = 2..)]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Pairwise significance level (before Bonferroni correction)
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Friedman significance level
    #[arg(long, default_value_t = 0.005)]
    pub alpha_friedman: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "significance")]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rib pair count (labels 2..=pairs+1)
    #[arg(long, default_value_t = 9)]
    pub pairs: u8,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Deformation spec: translate:DX,DY | affine:SCALE,ANGLE_DEG |
    /// smooth:AMPLITUDE,CELL,SEED | heart:FACTOR | diaphragm:PX |
    /// blob:CX,CY,RADIUS,INTENSITY
    #[arg(long)]
    pub deform: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "phantom")]
    pub prefix: String,
}

/// Output directory resolution: --out, then $RIBREG_OUT, then the cwd.
pub fn resolve_out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os("RIBREG_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
