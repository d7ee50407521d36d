//! Command-line argument definitions. Every command records its resolved
//! arguments as `config.json` in its output directory, so the structs also
//! derive `Serialize`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "videnn", version, about = "Blind video denoising toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Degrade a directory of PNG frames with AWGN or the sensor noise model.
    SynthNoise(SynthNoiseArgs),
    /// Build a spatial or temporal training dataset (manifest + patch PNGs).
    BuildDataset(BuildDatasetArgs),
    /// Train the spatial denoising network on a built dataset.
    TrainSpatial(TrainArgs),
    /// Train the temporal denoising network (requires trained spatial weights).
    TrainTemporal(TrainArgs),
    /// Denoise a frame directory (spatial / temporal / full / baseline modes).
    Denoise(DenoiseArgs),
    /// Per-frame PSNR/SSIM of a test directory against a reference directory.
    Evaluate(EvaluateArgs),
    /// Benchmark-table-shaped sigma sweep over a clean frame directory.
    EvaluateGrid(EvaluateGridArgs),
    /// Finite-difference checks of every backward op.
    Gradcheck(GradcheckArgs),
    /// Export first-layer filter activation maps as grayscale PNGs.
    DumpFilters(DumpFiltersArgs),
    /// Denoise a center frame with original and edited neighbor frames and
    /// compare the outcomes.
    ProbeInconsistency(ProbeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiseMode {
    /// Per-frame spatial denoising only.
    Spatial,
    /// Temporal network applied directly to the noisy frames.
    Temporal,
    /// Spatial stage followed by the temporal stage.
    Full,
    /// Plain moving average over the window.
    TemporalAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKindArg {
    Spatial,
    Temporal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Relu,
    LeakyRelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Sum,
    Mean,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthNoiseArgs {
    /// Directory of input PNG frames.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for degraded frames.
    #[arg(long)]
    pub output: PathBuf,
    /// AWGN standard deviation in 8-bit units.
    #[arg(long, conflicts_with = "sensor")]
    pub awgn_sigma: Option<f64>,
    /// Use the signal-dependent sensor model instead of AWGN.
    #[arg(long)]
    pub sensor: bool,
    /// Analog gain for the sensor model.
    #[arg(long, default_value_t = 64.0)]
    pub ag: f64,
    /// Digital gain for the sensor model.
    #[arg(long, default_value_t = 4.0)]
    pub dg: f64,
    #[arg(long)]
    pub ct1n: Option<f64>,
    #[arg(long)]
    pub ct2n: Option<f64>,
    #[arg(long)]
    pub nsat: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildDatasetArgs {
    #[arg(long, value_enum)]
    pub kind: DatasetKindArg,
    /// Directory of clean PNG images (spatial datasets).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Directory of video subdirectories, each holding numbered PNG frames
    /// (temporal datasets).
    #[arg(long)]
    pub videos: Option<PathBuf>,
    /// Trained spatial weights, required for temporal datasets.
    #[arg(long)]
    pub spatial_weights: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub patch_size: usize,
    #[arg(long)]
    pub patch_count: usize,
    /// Probability of drawing the AWGN family per source image/sequence.
    #[arg(long, default_value_t = 0.5)]
    pub awgn_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 55.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ag_min: f64,
    #[arg(long, default_value_t = 64.0)]
    pub ag_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dg_min: f64,
    #[arg(long, default_value_t = 32.0)]
    pub dg_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip writing patch PNGs (the manifest alone regenerates them).
    #[arg(long)]
    pub no_patch_pngs: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Dataset directory holding manifest.tsv from build-dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Spatial weights used to regenerate temporal datasets; must match the
    /// file the dataset was built with. Ignored for train-spatial.
    #[arg(long)]
    pub spatial_weights: Option<PathBuf>,
    /// Network depth (layer count).
    #[arg(long)]
    pub depth: Option<usize>,
    /// Feature maps of the first layer.
    #[arg(long)]
    pub first_width: Option<usize>,
    /// Feature maps of the hidden layers.
    #[arg(long)]
    pub mid_width: Option<usize>,
    /// Temporal window (frames); fixes input channels to 3*window.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long, default_value_t = 0.2)]
    pub leaky_alpha: f32,
    /// Force batch normalization on or off (defaults: spatial on, temporal off).
    #[arg(long)]
    pub batch_norm: Option<bool>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning-rate segments as `epochs:lr` pairs, e.g. `20:1e-3,80:1e-4`.
    #[arg(long)]
    pub lr_segments: Option<String>,
    #[arg(long, value_enum, default_value_t = LossArg::Sum)]
    pub loss: LossArg,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Write a checkpoint every N optimizer steps.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Resume from a checkpoint file instead of initializing fresh weights.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub mode: DenoiseMode,
    #[arg(long)]
    pub spatial_weights: Option<PathBuf>,
    #[arg(long)]
    pub temporal_weights: Option<PathBuf>,
    /// Window for the temporal-average baseline.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Serialize all per-frame work.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Reference (clean) frame directory.
    #[arg(long)]
    pub reference: PathBuf,
    /// Test (denoised) frame directory, matched to the reference by filename.
    #[arg(long)]
    pub test: PathBuf,
    /// Metrics CSV path.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateGridArgs {
    /// Clean frame directory to corrupt and denoise at each sigma.
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated AWGN levels (8-bit units).
    #[arg(long, default_value = "5,10,15,25,35,50")]
    pub sigmas: String,
    #[arg(long)]
    pub spatial_weights: Option<PathBuf>,
    #[arg(long)]
    pub temporal_weights: Option<PathBuf>,
    /// Include the temporal-average baseline row.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional directory for the report and config snapshot.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DumpFiltersArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Input PNG image.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated filter indices; all filters when omitted.
    #[arg(long)]
    pub filters: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub prev: PathBuf,
    #[arg(long)]
    pub center: PathBuf,
    #[arg(long)]
    pub next: PathBuf,
    /// Clean reference for the center frame.
    #[arg(long)]
    pub clean: PathBuf,
    /// Edited previous frame; defaults to the original.
    #[arg(long)]
    pub edited_prev: Option<PathBuf>,
    /// Edited next frame; defaults to the original.
    #[arg(long)]
    pub edited_next: Option<PathBuf>,
    #[arg(long)]
    pub spatial_weights: PathBuf,
    #[arg(long)]
    pub temporal_weights: PathBuf,
    /// Optional directory for the report and config snapshot.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
