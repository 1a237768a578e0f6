//! Chunk/patch sliding-window inference around a pluggable patch predictor.
//!
//! The volume is cut into chunks that overlap their neighbours by one patch.
//! Inside a chunk, overlapping patches are predicted and their class
//! probabilities averaged; each chunk then contributes only its interior, so
//! every voxel is written by exactly one chunk and always sits at least half
//! a patch away from that chunk's cut faces (unless it lies on the volume
//! boundary).

mod pipeline;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bordercore::{encode, BorderCoreConfig};
use crate::classical::{threshwater, ThreshWaterParams};
use crate::volume::{class, num_voxels, Bounds, LabelVolume, ScalarVolume, SemanticVolume, Shape};
use crate::{Error, Result};

pub use pipeline::{run_inference, InferenceConfig, InferenceOutput, VolumeSource};

pub const NUM_CLASSES: usize = 3;

/// Produces per-voxel class probabilities (background, core, border) for a
/// patch of z-scored, size-normalised intensities.
pub trait PatchPredictor: Sync {
    /// `origin` is the patch position in the normalised volume. Output is in
    /// the patch's raster order; each triple is non-negative and sums to 1.
    fn predict(&self, patch: &ScalarVolume, origin: [usize; 3]) -> Result<Vec<[f32; NUM_CLASSES]>>;
}

fn one_hot(c: u8) -> [f32; NUM_CLASSES] {
    let mut p = [0.0; NUM_CLASSES];
    p[c as usize] = 1.0;
    p
}

/// Emits the border-core encoding of known labels, ignoring intensities.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    target: SemanticVolume,
}

impl OraclePredictor {
    /// `reference` must already be on the normalised grid.
    pub fn new(reference: &LabelVolume, cfg: &BorderCoreConfig) -> Self {
        OraclePredictor {
            target: encode(reference, cfg),
        }
    }

    pub fn target(&self) -> &SemanticVolume {
        &self.target
    }
}

impl PatchPredictor for OraclePredictor {
    fn predict(&self, patch: &ScalarVolume, origin: [usize; 3]) -> Result<Vec<[f32; NUM_CLASSES]>> {
        let s = patch.shape();
        let hi = [0, 1, 2].map(|a| origin[a] + s[a]);
        if (0..3).any(|a| hi[a] > self.target.shape()[a]) {
            return Err(Error::Contract(format!(
                "patch [{origin:?}, {hi:?}) exceeds the oracle's volume {:?}",
                self.target.shape()
            )));
        }
        let t = self.target.crop_unchecked(Bounds::new(origin, hi));
        Ok(t.data().iter().map(|&c| one_hot(c)).collect())
    }
}

/// ThreshWater on each patch, border-core encoded and one-hot.
#[derive(Debug, Clone)]
pub struct ThreshWaterPredictor {
    /// threshold in z-scored units
    pub params: ThreshWaterParams,
    pub cfg: BorderCoreConfig,
}

impl PatchPredictor for ThreshWaterPredictor {
    fn predict(&self, patch: &ScalarVolume, _origin: [usize; 3]) -> Result<Vec<[f32; NUM_CLASSES]>> {
        let labels = threshwater(patch, &self.params);
        Ok(encode(&labels, &self.cfg).data().iter().map(|&c| one_hot(c)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub patch_shape: Shape,
    pub stride: Shape,
    /// raster order, x fastest
    pub positions: Vec<[usize; 3]>,
}

fn axis_positions(region: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 0;
    while p + patch < region {
        out.push(p);
        p += stride;
    }
    out.push(region - patch);
    out
}

/// Overlapping patch origins covering `region`; patches larger than the
/// region shrink to it.
pub fn plan_patches(region: Shape, patch: Shape, overlap_fraction: f64) -> Result<PatchPlan> {
    if patch.contains(&0) || region.contains(&0) {
        return Err(Error::Argument(format!(
            "patch {patch:?} and region {region:?} must be non-empty"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::Argument(format!(
            "overlap fraction {overlap_fraction} is outside [0, 1)"
        )));
    }
    let patch_shape = [0, 1, 2].map(|a| patch[a].min(region[a]));
    let stride = patch_shape.map(|p| ((p as f64 * (1.0 - overlap_fraction)).floor() as usize).max(1));
    let axes: Vec<Vec<usize>> = (0..3)
        .map(|a| axis_positions(region[a], patch_shape[a], stride[a]))
        .collect();
    let mut positions = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &z in &axes[2] {
        for &y in &axes[1] {
            for &x in &axes[0] {
                positions.push([x, y, z]);
            }
        }
    }
    Ok(PatchPlan {
        patch_shape,
        stride,
        positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpec {
    /// the chunk as read and predicted
    pub bounds: Bounds,
    /// the part this chunk writes; interiors partition the volume
    pub interior: Bounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_shape: Shape,
    pub overlap: Shape,
    /// raster order, x fastest
    pub chunks: Vec<ChunkSpec>,
}

impl ChunkPlan {
    /// Largest interior extent per axis.
    pub fn interior_extent(&self) -> Shape {
        let mut e = [1; 3];
        for c in &self.chunks {
            let s = c.interior.shape();
            for a in 0..3 {
                e[a] = e[a].max(s[a]);
            }
        }
        e
    }
}

/// Per axis: chunk origins and interior breakpoints.
fn axis_chunks(n: usize, chunk: usize, patch: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut origins = vec![0];
    while origins.last().unwrap() + chunk < n {
        let o = origins.last().unwrap() + chunk - patch;
        origins.push(o);
    }
    let k = origins.len();
    (0..k)
        .map(|i| {
            let o = origins[i];
            let lo = if i == 0 { 0 } else { o + patch / 2 };
            let hi = if i + 1 == k { n } else { origins[i + 1] + patch / 2 };
            (o, (o + chunk).min(n), lo, hi)
        })
        .collect()
}

/// Chunks overlapping by exactly one patch; each chunk owns the interior
/// between the midpoints of its overlaps with its neighbours.
pub fn plan_chunks(volume: Shape, chunk: Shape, patch: Shape) -> Result<ChunkPlan> {
    if volume.contains(&0) || patch.contains(&0) {
        return Err(Error::Argument(format!(
            "volume {volume:?} and patch {patch:?} must be non-empty"
        )));
    }
    if (0..3).any(|a| chunk[a] < 2 * patch[a]) {
        return Err(Error::Argument(format!(
            "chunk {chunk:?} must be at least twice the patch {patch:?} on every axis"
        )));
    }
    let axes: Vec<_> = (0..3).map(|a| axis_chunks(volume[a], chunk[a], patch[a])).collect();
    let mut chunks = Vec::new();
    for z in &axes[2] {
        for y in &axes[1] {
            for x in &axes[0] {
                chunks.push(ChunkSpec {
                    bounds: Bounds::new([x.0, y.0, z.0], [x.1, y.1, z.1]),
                    interior: Bounds::new([x.2, y.2, z.2], [x.3, y.3, z.3]),
                });
            }
        }
    }
    Ok(ChunkPlan {
        chunk_shape: chunk,
        overlap: patch,
        chunks,
    })
}

/// Index of the largest probability, ties going to the higher class.
#[inline]
fn argmax(p: [f32; NUM_CLASSES]) -> u8 {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if p[k] >= p[best] {
            best = k;
        }
    }
    best as u8
}

fn check_prediction(out: &[[f32; NUM_CLASSES]], expected: usize, origin: [usize; 3]) -> Result<()> {
    if out.len() != expected {
        return Err(Error::Contract(format!(
            "predictor returned {} voxels for a patch of {expected} at {origin:?}",
            out.len()
        )));
    }
    for p in out {
        let s: f32 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-5 {
            return Err(Error::Contract(format!(
                "predictor returned probabilities {p:?} at patch {origin:?}"
            )));
        }
    }
    Ok(())
}

/// Averages patch predictions over `vol` (a chunk at `origin` of the
/// normalised volume) and takes the per-voxel argmax. Patches are predicted
/// in parallel batches but accumulated in plan order.
pub fn infer_chunk(
    vol: &ScalarVolume,
    origin: [usize; 3],
    predictor: &dyn PatchPredictor,
    plan: &PatchPlan,
) -> Result<SemanticVolume> {
    let shape = vol.shape();
    let n = num_voxels(shape);
    let mut sum = vec![[0f32; NUM_CLASSES]; n];
    let mut count = vec![0u32; n];
    let ps = plan.patch_shape;
    let batch = rayon::current_num_threads().max(1);
    for group in plan.positions.chunks(batch) {
        let preds: Vec<Vec<[f32; NUM_CLASSES]>> = group
            .par_iter()
            .map(|&p| {
                let b = Bounds::new(p, [0, 1, 2].map(|a| p[a] + ps[a]));
                let patch = vol.crop_unchecked(b);
                let g = [0, 1, 2].map(|a| origin[a] + p[a]);
                let out = predictor.predict(&patch, g)?;
                check_prediction(&out, num_voxels(ps), g)?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for (&p, pred) in group.iter().zip(preds) {
            let mut k = 0;
            for z in p[2]..p[2] + ps[2] {
                for y in p[1]..p[1] + ps[1] {
                    let row = p[0] + shape[0] * (y + shape[1] * z);
                    for i in row..row + ps[0] {
                        for c in 0..NUM_CLASSES {
                            sum[i][c] += pred[k][c];
                        }
                        count[i] += 1;
                        k += 1;
                    }
                }
            }
        }
    }
    let classes: Vec<u8> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| {
            if c == 0 {
                return class::BACKGROUND;
            }
            let c = c as f32;
            argmax([s[0] / c, s[1] / c, s[2] / c])
        })
        .collect();
    Ok(vol.with_data(classes))
}
