use std::path::PathBuf;

use bcseg_core::bordercore::BorderCoreConfig;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Border-core instance segmentation of large volumetric particle images.
#[derive(Debug, Parser, Serialize)]
#[command(name = "bcseg", version)]
pub struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log filter for standard error, e.g. `info` or `bcseg_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Convert a flat raw file (x fastest) into a scalar store.
    Import(ImportArgs),
    /// Generate a synthetic phantom and its labels.
    Synth(SynthArgs),
    /// Corpus mean and standard deviation over scalar stores, as JSON.
    Stats(StatsArgs),
    /// Instance labels to border-core classes.
    Encode(EncodeArgs),
    /// Border-core classes to instance labels, cell by cell.
    Decode(DecodeArgs),
    /// Chunked patch inference followed by decoding.
    Infer(InferArgs),
    /// Threshold + watershed baseline.
    Threshwater(ThreshwaterArgs),
    /// Split one instance along a drawn border.
    Split(SplitArgs),
    /// Paste a bank particle touching an existing one.
    Augment(AugmentArgs),
    /// Write normalised image / border-core target pairs and a manifest.
    ExportTrain(ExportTrainArgs),
    /// Compare a predicted label store against a reference, as JSON.
    Eval(EvalArgs),
    /// Per-instance size table as CSV.
    Measure(MeasureArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Import(_) => "import",
            Command::Synth(_) => "synth",
            Command::Stats(_) => "stats",
            Command::Encode(_) => "encode",
            Command::Decode(_) => "decode",
            Command::Infer(_) => "infer",
            Command::Threshwater(_) => "threshwater",
            Command::Split(_) => "split",
            Command::Augment(_) => "augment",
            Command::ExportTrain(_) => "export-train",
            Command::Eval(_) => "eval",
            Command::Measure(_) => "measure",
        }
    }

    /// The seed a run depends on, if any.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Synth(a) => a.seed,
            Command::Augment(a) => Some(a.seed),
            _ => None,
        }
    }
}

/// `N` for a cube or `X,Y,Z`.
pub fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(format!("expected N or X,Y,Z, got `{s}`")),
    }
}

pub fn parse_spacing(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [v] => Ok([v; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(format!("expected S or SX,SY,SZ, got `{s}`")),
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct BorderArgs {
    /// Border thickness in voxels.
    #[arg(long, default_value_t = 3)]
    pub thickness: u32,
    /// Small-core filter: distance (voxels) from the core surface counted as "near".
    #[arg(long, default_value_t = 1.0)]
    pub min_distance: f64,
    /// Small-core filter: remove a core when this fraction of it is near its surface.
    #[arg(long, default_value_t = 0.95)]
    pub filter_threshold: f64,
}

impl BorderArgs {
    pub fn config(&self) -> BorderCoreConfig {
        BorderCoreConfig {
            border_thickness_vox: self.thickness,
            filter_min_distance: self.min_distance,
            filter_threshold: self.filter_threshold,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    /// Raw file, x fastest, no header.
    #[arg(long)]
    pub raw: PathBuf,
    /// Volume shape, X,Y,Z.
    #[arg(long, value_parser = parse_triple)]
    pub shape: [usize; 3],
    /// Voxel spacing in mm, S or SX,SY,SZ.
    #[arg(long, value_parser = parse_spacing, default_value = "1")]
    pub spacing: [f64; 3],
    /// Sample type: u8, u16 or f32.
    #[arg(long, default_value = "u16")]
    pub dtype: String,
    /// Byte order: little or big.
    #[arg(long, default_value = "little")]
    pub endian: String,
    /// Output scalar store.
    #[arg(long)]
    pub out: PathBuf,
    /// Store cell shape, N or X,Y,Z.
    #[arg(long, value_parser = parse_triple, default_value = "64")]
    pub chunk: [usize; 3],
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Phantom description as JSON; missing fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the phantom description's rng_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_vol: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
    /// Store cell shape, N or X,Y,Z.
    #[arg(long, value_parser = parse_triple, default_value = "64")]
    pub chunk: [usize; 3],
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Scalar stores; repeat for a corpus.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write `{mu, sigma}` here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    /// Label store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Semantic store.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub border: BorderArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    /// Semantic store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Label store (same cell shape as the input).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub border: BorderArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    /// Scalar store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Label store on the input grid.
    #[arg(long)]
    pub out: PathBuf,
    /// `oracle:<labels.store>` (labels on the input grid) or
    /// `threshwater:<T>[,<opening>,<seed-erosion>]` with T in z-scored units.
    #[arg(long)]
    pub predictor: String,
    /// Patch shape, N or X,Y,Z.
    #[arg(long, value_parser = parse_triple, default_value = "128")]
    pub patch: [usize; 3],
    /// Fraction of a patch shared with its neighbour.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Chunk shape on the normalised grid, N or X,Y,Z; at least twice the patch.
    #[arg(long, value_parser = parse_triple, default_value = "384")]
    pub chunk: [usize; 3],
    /// Particle diameter in voxels in the input.
    #[arg(long)]
    pub ref_size_vox: f64,
    /// Particle diameter in voxels after normalisation.
    #[arg(long, default_value_t = bcseg_core::preprocess::DEFAULT_TARGET_PARTICLE_SIZE_VOX)]
    pub target_size_vox: f64,
    /// JSON `{mu, sigma}` from `stats`.
    #[arg(long)]
    pub stats: PathBuf,
    /// Directory for the intermediate semantic and label stores.
    #[arg(long)]
    pub scratch: PathBuf,
    /// Output cell shape (default: the input's).
    #[arg(long, value_parser = parse_triple)]
    pub out_chunk: Option<[usize; 3]>,
    #[command(flatten)]
    pub border: BorderArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ThreshwaterArgs {
    /// Scalar store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Foreground is intensity >= threshold (raw units).
    #[arg(long)]
    pub threshold: f64,
    /// Ball radius of the opening.
    #[arg(long, default_value_t = 1)]
    pub opening: u32,
    /// Ball radius of the erosion that yields seeds.
    #[arg(long, default_value_t = 3)]
    pub seed_erosion: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// Label store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Instance to split.
    #[arg(long)]
    pub label: u32,
    /// JSON list of [x, y, z] marker voxels, one per resulting part.
    #[arg(long)]
    pub markers: PathBuf,
    /// JSON list of [x, y, z] voxels of the drawn border.
    #[arg(long)]
    pub border: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Scalar store of the patch.
    #[arg(long)]
    pub vol: PathBuf,
    /// Label store of the patch.
    #[arg(long)]
    pub labels: PathBuf,
    /// `VOL.store,LABELS.store` pair feeding the particle bank; repeatable.
    /// Without any, the patch is its own bank.
    #[arg(long)]
    pub bank: Vec<String>,
    /// Probability of attempting a placement.
    #[arg(long, default_value_t = bcseg_core::augment::DEFAULT_AUGMENT_PROBABILITY)]
    pub prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_vol: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportTrainArgs {
    /// Scalar stores; repeatable, paired in order with --labels.
    #[arg(long, required = true)]
    pub vol: Vec<PathBuf>,
    /// Label stores; repeatable.
    #[arg(long, required = true)]
    pub labels: Vec<PathBuf>,
    /// JSON `{mu, sigma}` from `stats`.
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub ref_size_vox: f64,
    #[arg(long, default_value_t = bcseg_core::preprocess::DEFAULT_TARGET_PARTICLE_SIZE_VOX)]
    pub target_size_vox: f64,
    #[command(flatten)]
    pub border: BorderArgs,
    /// Output directory; receives the stores and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Predicted label store.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference label store.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureArgs {
    /// Label store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
