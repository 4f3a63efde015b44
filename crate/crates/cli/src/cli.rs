//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "wshare", version, about = "DRAM energy model and weight clustering for CNN accelerators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bandwidth, frame rate and energy of a network, unclustered and clustered.
    Analyze(AnalyzeArgs),
    /// Cluster the convolution kernels of a Darknet weights file into a CWTS container.
    Cluster(ClusterArgs),
    /// Check clustered inference against the dequantized and original weights.
    Verify(VerifyArgs),
    /// Join analyze reports into an energy-reduction versus quality table.
    Compare(CompareArgs),
    /// Mean average precision of detections against ground truth.
    Map(MapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    PerLayer,
    AllLayers,
}

impl From<ScopeArg> for wshare::cluster::Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::PerLayer => wshare::cluster::Scope::PerLayer,
            ScopeArg::AllLayers => wshare::cluster::Scope::AllLayers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketingArg {
    /// Both shortcut operands count as input reads.
    BothInputs,
    /// The earlier shortcut operand counts as an output read.
    SplitOperands,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    Linspace,
    KmeansPp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationArg {
    AllPoint,
    ElevenPoint,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnergyArg {
    /// Energy model constants; the bundled defaults are used when absent.
    #[arg(long = "energy", env = "WSHARE_ENERGY_CONFIG", value_name = "PATH")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Darknet network definition (.cfg).
    pub cfg: PathBuf,
    #[command(flatten)]
    pub energy: EnergyArg,
    /// Index widths to evaluate; defaults to every width with an SRAM energy entry.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u32).range(5..=8))]
    pub bits: Vec<u32>,
    #[arg(long, value_enum, default_value = "per-layer")]
    pub scope: ScopeArg,
    /// Rescale the FP energies so DRAM takes `calibration_dram_share` of the baseline.
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long, value_enum, default_value = "both-inputs")]
    pub shortcut_bucketing: BucketingArg,
    /// Accept kernel/stride pairs beyond 3x3/s1, 3x3/s2 and 1x1/s1 with a generalized count.
    #[arg(long)]
    pub generalized_conv: bool,
    /// Write the full JSON report here.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Write the comparison table as CSV here.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    pub cfg: PathBuf,
    /// Darknet .weights file matching the cfg.
    pub weights: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub bits: u8,
    #[arg(long, value_enum, default_value = "per-layer")]
    pub scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "linspace")]
    pub init: InitArg,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iters: u32,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output CWTS container.
    #[arg(short, long, value_name = "PATH")]
    pub out: PathBuf,
    /// Write per-table statistics as JSON here.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    pub cfg: PathBuf,
    pub weights: PathBuf,
    /// CWTS container produced by `cluster`.
    pub cwts: PathBuf,
    /// Seed of the random input tensors.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random inputs to run.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub inputs: u32,
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    /// JSON reports written by `analyze --json`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Quality value for a configuration, as `LABEL=VALUE`; repeatable.
    #[arg(long, value_name = "LABEL=VALUE")]
    pub quality: Vec<String>,
    /// Header of the quality column.
    #[arg(long, default_value = "quality")]
    pub quality_name: String,
    /// Output CSV; printed to stdout when absent.
    #[arg(short, long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MapArgs {
    /// Ground truth lines: `image_id class_id x_min y_min x_max y_max`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection lines: `image_id class_id x_min y_min x_max y_max confidence`.
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, value_enum, default_value = "all-point")]
    pub interpolation: InterpolationArg,
    /// Restrict the mean to these class ids.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<u32>,
    /// Drop detections below this confidence before matching.
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}
