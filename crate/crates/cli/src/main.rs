//! `dentalscan` command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 data or format error.

mod commands;
mod header;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dentalscan::preprocess::{BoundingBox, Split};
use dentalscan::spectral::Illuminant;
use dentalscan::train::LogBase;
use dentalscan::zoo::Architecture;
use dentalscan::Error;

#[derive(Debug, Parser)]
#[command(name = "dentalscan", version, about = "Dental calculus screening from RGB intraoral photographs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop, letterbox to 640x640 and normalize images into `.tkrt` tensors.
    Preprocess(PreprocessArgs),
    /// Assign a seeded, stratified 70/20/10 split to a manifest.
    Split(SplitArgs),
    /// Run the frozen backbone over a manifest split and cache the features.
    ExtractFeatures(ExtractArgs),
    /// Train the 2-way head on cached features.
    Train(TrainArgs),
    /// Score a trained model on a labeled split.
    Evaluate(EvaluateArgs),
    /// Classify one image or preprocessed tensor.
    Classify(ClassifyArgs),
    /// Measure load time, latency and peak memory.
    Bench(BenchArgs),
    /// Report multiply-accumulate counts.
    Macs(MacsArgs),
    /// Render a hyperspectral `.tksc` cube as an sRGB PNG.
    SpectralConvert(SpectralArgs),
    /// Write deterministic synthetic weights for an architecture.
    SynthWeights(SynthArgs),
}

fn parse_arch(s: &str) -> Result<Architecture, Error> {
    s.parse()
}

fn parse_bbox(s: &str) -> Result<BoundingBox, String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bounding box `{s}`: {e}"))?;
    match parts[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok(BoundingBox::new(x, y, w, h)),
        _ => Err(format!("bounding box `{s}` must be x,y,w,h with positive w and h")),
    }
}

/// One image (optionally cropped) or one preprocessed tensor.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Image file (PNG or JPEG).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Preprocessed `3x224x224` `.tkrt` tensor.
    #[arg(long)]
    tensor: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Single image to convert.
    #[arg(long, conflicts_with_all = ["manifest", "out_dir"], requires = "out")]
    image: Option<PathBuf>,
    /// Crop box `x,y,w,h` for `--image`; defaults to the whole image.
    #[arg(long, value_parser = parse_bbox, requires = "image")]
    bbox: Option<BoundingBox>,
    /// Output tensor for `--image`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save the 640x640 letterboxed frame as PNG.
    #[arg(long, requires = "image")]
    frame: Option<PathBuf>,
    /// Manifest CSV (`path,label,x,y,w,h[,split]`) to convert in bulk.
    #[arg(long, requires = "out_dir")]
    manifest: Option<PathBuf>,
    /// Output directory for `--manifest`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Only convert records tagged with this split.
    #[arg(long, requires = "manifest")]
    split: Option<Split>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tagged manifest destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Split to extract; every record when absent.
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    /// Training feature cache from `extract-features`.
    #[arg(long)]
    train_features: PathBuf,
    /// Validation feature cache from `extract-features`.
    #[arg(long)]
    val_features: PathBuf,
    /// Checkpoint destination.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch curves CSV; stdout when absent.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Defaults to 30 for resnet34 and 50 for mobilenet_v3_small.
    #[arg(long)]
    epochs: Option<usize>,
    /// Defaults to 128 for resnet34 and 32 for mobilenet_v3_small.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-entropy logarithm base, `2` or `e`.
    #[arg(long, default_value = "2")]
    log_base: LogBase,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled manifest to run through the full pipeline.
    #[arg(long, required_unless_present = "features", conflicts_with = "features")]
    manifest: Option<PathBuf>,
    /// Split of `--manifest` to score.
    #[arg(long, default_value = "test", requires = "manifest")]
    split: Split,
    /// Cached features to score with the head only.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Report CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Crop box `x,y,w,h` for `--image`; defaults to the whole image.
    #[arg(long, value_parser = parse_bbox, requires = "image")]
    bbox: Option<BoundingBox>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long)]
    weights: PathBuf,
    /// Head checkpoint; the weights file must contain a head otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_bbox, requires = "image")]
    bbox: Option<BoundingBox>,
    #[arg(long, default_value_t = dentalscan::bench::DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = dentalscan::bench::DEFAULT_WARMUP)]
    warmup: usize,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MacsArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    /// Input extents `CxHxW`.
    #[arg(long, default_value = "3x224x224")]
    input: String,
    /// Weights to build the graph from; synthetic ones otherwise (counts do
    /// not depend on values).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Emit one CSV row per layer instead of the totals.
    #[arg(long)]
    per_layer: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectralArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "D65")]
    illuminant: Illuminant,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => 2,
        Error::Io { .. } | Error::Stream(_) => 3,
        Error::Shape(_)
        | Error::Domain(_)
        | Error::Format(_)
        | Error::Data(_)
        | Error::MissingWeight(_)
        | Error::Bounds { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
