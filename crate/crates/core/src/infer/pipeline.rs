//! End-to-end inference over volumes that need not fit in memory.
//!
//! Chunks are planned on the size-normalised grid. For each chunk the
//! matching source window is read, z-scored and resampled on the fly, the
//! chunk is predicted, and only its interior is written to a semantic block
//! store in scratch. The store is then decoded cell by cell and mapped back
//! onto the original grid by nearest-neighbour sampling, again cell by cell.
//!
//! Chunks run one after another; parallelism lives inside a chunk (patch
//! batches), so resident memory is one chunk plus halos whatever the volume
//! size.

use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{infer_chunk, plan_chunks, plan_patches, ChunkPlan, PatchPredictor};
use crate::bordercore::{decode_streaming, BorderCoreConfig};
use crate::preprocess::{
    nearest_source, nearest_source_window, trilinear_region, trilinear_source_window, zscore_value,
    GlobalStats, SizeNormSpec,
};
use crate::volume::{
    num_voxels, BlockStore, BlockStoreWriter, Bounds, ScalarVolume, Shape, Volume, VolumeKind,
};
use crate::{DType, Error, Result, VolumeMeta};

/// Somewhere intensities can be read from box by box.
pub trait VolumeSource: Sync {
    fn meta(&self) -> &VolumeMeta;

    fn read(&self, b: Bounds) -> Result<ScalarVolume>;

    /// Preferred cell shape for outputs aligned with this source.
    fn chunk_hint(&self) -> Option<Shape> {
        None
    }

    fn shape(&self) -> Shape {
        self.meta().shape
    }
}

impl VolumeSource for ScalarVolume {
    fn meta(&self) -> &VolumeMeta {
        Volume::meta(self)
    }

    fn read(&self, b: Bounds) -> Result<ScalarVolume> {
        self.crop(b.lo, b.hi)
    }
}

impl VolumeSource for BlockStore {
    fn meta(&self) -> &VolumeMeta {
        BlockStore::meta(self)
    }

    fn read(&self, b: Bounds) -> Result<ScalarVolume> {
        self.read_region(b)
    }

    fn chunk_hint(&self) -> Option<Shape> {
        Some(self.chunk_shape())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub patch_shape: Shape,
    pub overlap_fraction: f64,
    pub chunk_shape: Shape,
    pub border: BorderCoreConfig,
    pub size: SizeNormSpec,
    pub stats: GlobalStats,
    /// Cell shape of the output label store; defaults to the source's.
    pub output_chunk: Option<Shape>,
}

impl InferenceConfig {
    pub fn new(stats: GlobalStats, size: SizeNormSpec) -> Self {
        InferenceConfig {
            patch_shape: [128; 3],
            overlap_fraction: 0.5,
            chunk_shape: [384; 3],
            border: BorderCoreConfig::default(),
            size,
            stats,
            output_chunk: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOutput {
    /// border-core classes on the normalised grid
    pub semantic: BlockStore,
    /// instances on the normalised grid
    pub labels_normalized: BlockStore,
    /// instances on the original grid
    pub labels: BlockStore,
    pub plan: ChunkPlan,
}

fn semantic_cell(cfg: &InferenceConfig, norm: Shape) -> Shape {
    [0, 1, 2].map(|a| (cfg.chunk_shape[a] - cfg.patch_shape[a]).clamp(1, norm[a]))
}

/// Predicts one planned chunk and returns the classes of its interior.
fn predict_chunk(
    source: &dyn VolumeSource,
    predictor: &dyn PatchPredictor,
    cfg: &InferenceConfig,
    norm: Shape,
    chunk: Bounds,
    interior: Bounds,
) -> Result<Volume<u8>> {
    let src_shape = source.shape();
    let win = trilinear_source_window(src_shape, norm, chunk);
    let raw = source.read(win)?;
    let stats = cfg.stats;
    let z = raw.map(|v| zscore_value(v, &stats));
    let data = trilinear_region(&z, win.lo, src_shape, norm, chunk);
    drop(z);
    let vol = ScalarVolume::new(VolumeMeta::isotropic(chunk.shape(), DType::F32), data)?;
    let patches = plan_patches(chunk.shape(), cfg.patch_shape, cfg.overlap_fraction)?;
    let sem = infer_chunk(&vol, chunk.lo, predictor, &patches)?;
    let lo = [0, 1, 2].map(|a| interior.lo[a] - chunk.lo[a]);
    let hi = [0, 1, 2].map(|a| interior.hi[a] - chunk.lo[a]);
    Ok(sem.crop_unchecked(Bounds::new(lo, hi)))
}

/// z-score → size-normalise per chunk → patch inference → semantic store in
/// `scratch` → streamed decode → labels on the original grid at `out`.
pub fn run_inference(
    source: &dyn VolumeSource,
    predictor: &dyn PatchPredictor,
    cfg: &InferenceConfig,
    scratch: impl AsRef<Path>,
    out: impl AsRef<Path>,
) -> Result<InferenceOutput> {
    cfg.border.validate()?;
    cfg.stats.validate()?;
    let scale = cfg.size.scale()?;
    let orig = source.shape();
    let norm = cfg.size.normalized_shape(orig)?;
    let plan = plan_chunks(norm, cfg.chunk_shape, cfg.patch_shape)?;
    plan_patches(norm, cfg.patch_shape, cfg.overlap_fraction)?;
    info!(
        "inference: {:?} -> normalised {:?}, {} chunk(s)",
        orig,
        norm,
        plan.chunks.len()
    );

    let scratch = scratch.as_ref();
    let mut norm_meta = source.meta().clone();
    norm_meta.shape = norm;
    norm_meta.dtype = DType::U8;
    for s in norm_meta.spacing_mm.iter_mut() {
        *s /= scale;
    }
    let cell = semantic_cell(cfg, norm);
    let sem_root = scratch.join("semantic.store");
    let writer = BlockStoreWriter::create::<u8>(&sem_root, norm_meta.clone(), cell)?;
    for (k, ch) in plan.chunks.iter().enumerate() {
        debug!("chunk {k}: {:?}", ch.bounds);
        let interior = predict_chunk(source, predictor, cfg, norm, ch.bounds, ch.interior)?;
        writer.write_region(ch.interior.lo, &interior)?;
    }
    let semantic = writer.finish()?;

    let labels_norm_root: PathBuf = scratch.join("labels_norm.store");
    let labels_normalized = decode_streaming(&semantic, &cfg.border, &labels_norm_root)?;

    let out_chunk = cfg
        .output_chunk
        .or_else(|| source.chunk_hint())
        .unwrap_or_else(|| [0, 1, 2].map(|a| ((cell[a] as f64 / scale).ceil() as usize).max(1)));
    let labels = denormalize_store(&labels_normalized, source.meta(), out_chunk, out.as_ref())?;
    Ok(InferenceOutput {
        semantic,
        labels_normalized,
        labels,
        plan,
    })
}

/// Nearest-neighbour resampling of a label store onto the grid of `target`,
/// one output cell at a time.
fn denormalize_store(
    labels: &BlockStore,
    target: &VolumeMeta,
    chunk: Shape,
    out: &Path,
) -> Result<BlockStore> {
    if labels.kind() != VolumeKind::Label {
        return Err(Error::Argument(format!(
            "{} is not a label store",
            labels.root().display()
        )));
    }
    let src = labels.shape();
    let dst = target.shape;
    let mut meta = target.clone();
    meta.dtype = DType::U32;
    let writer = BlockStoreWriter::create::<u32>(out, meta, chunk)?;
    let layout = writer.layout().clone();
    layout.chunks().par_iter().try_for_each(|&c| -> Result<()> {
        let b = layout.chunk_bounds(c);
        let w = nearest_source_window(src, dst, b);
        let win: Volume<u32> = labels.read_region(w)?;
        let ws = win.shape();
        let axis = |a: usize| -> Vec<usize> {
            (b.lo[a]..b.hi[a])
                .map(|d| nearest_source(d, src[a], dst[a]) - w.lo[a])
                .collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut data = Vec::with_capacity(num_voxels(b.shape()));
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    data.push(win.data()[x + ws[0] * (y + ws[1] * z)]);
                }
            }
        }
        writer.write_chunk(c, &data)
    })?;
    writer.finish()
}
