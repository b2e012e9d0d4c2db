use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gsc", version, about = "Rank, prune, compact and densify Gaussian splat clouds")]
pub struct Cli {
    /// Worker thread cap; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with ring cameras and optional ground-truth renders.
    Synth(SynthArgs),
    /// Score every splat against ground-truth views and write a score sidecar.
    Rank(RankArgs),
    /// Remove a fixed number of splats by inverse-importance sampling.
    Prune(PruneArgs),
    /// Merge splats block-wise by optimal transport.
    Compact(CompactArgs),
    /// Split splats marked as deficient.
    Split(SplitArgs),
    /// Render one PNG per camera.
    Render(RenderArgs),
    /// Compare renders with ground truth (PSNR, SSIM).
    Eval(EvalArgs),
    /// Time aggregation over a grid of sizes and depths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// Camera file to write.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Directory for ground-truth renders of the generated cloud.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Distinct splats.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Near-copies per splat.
    #[arg(long, default_value_t = 1)]
    pub dup: usize,
    #[arg(long, default_value_t = 8)]
    pub n_cameras: usize,
    /// Square image side.
    #[arg(long, default_value_t = 256)]
    pub resolution: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    /// Override camera resolution, `WxH` or a single side.
    #[arg(long)]
    pub resolution: Option<String>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub view: ViewArgs,
    /// Directory holding `view_000.png`, `view_001.png`, ...
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Sidecar to write; defaults to the one next to the input.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub tau1: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tau2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eps_v: f64,
    #[arg(long, default_value_t = 1)]
    pub view_stride: usize,
    /// Accepted for uniformity; ranking draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON summary path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Score sidecar; defaults to the one next to the input.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Number of splats to remove.
    #[arg(long)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.005)]
    pub min_opacity: f64,
    /// Largest scale kept as a candidate, relative to the scene extent.
    #[arg(long, default_value_t = 1.0)]
    pub max_world_scale: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    TopWeight,
    FarthestPoint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OpacityArg {
    WeightedMean,
    Coverage,
}

#[derive(Debug, Args)]
pub struct CompactArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Score sidecar with the deficiency channel; without one every splat counts once.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Retained fraction per block.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub kd_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub em_iters: usize,
    #[arg(long, value_enum, default_value_t = InitArg::TopWeight)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = OpacityArg::WeightedMean)]
    pub opacity: OpacityArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; defaults to `<output>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = gsc_core::densify::DEFAULT_ETA)]
    pub eta: f64,
    /// Shrink only the principal axis.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub view: ViewArgs,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub view: ViewArgs,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated cloud sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 20_000, 40_000])]
    pub ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 8, 10])]
    pub depths: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
