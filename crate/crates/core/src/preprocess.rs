//! Intensity z-scoring and particle-size normalisation.
//!
//! Particle size is one isotropic number (a diameter in voxels), so the
//! resampling factor is a single scalar `target / reference` for all axes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume::{num_voxels, Bounds, Element, LabelVolume, ScalarVolume, Shape, Volume};
use crate::{DType, Error, Result};

pub const DEFAULT_TARGET_PARTICLE_SIZE_VOX: f64 = 60.0;

/// Corpus-wide intensity mean `mu` and population standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub mu: f64,
    pub sigma: f64,
}

impl GlobalStats {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let s = GlobalStats { mu, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Degenerate(format!(
                "need finite mu and sigma > 0, got mu={} sigma={}",
                self.mu, self.sigma
            )));
        }
        Ok(())
    }
}

/// Streaming mean/variance (Welford updates, Chan et al. merges).
#[derive(Debug, Clone, Copy, Default)]
pub struct StatsAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

const STATS_BLOCK: usize = 1 << 16;

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_serial(&mut self, values: &[f32]) {
        for &v in values {
            self.n += 1;
            let x = f64::from(v);
            let delta = x - self.mean;
            self.mean += delta / self.n as f64;
            self.m2 += delta * (x - self.mean);
        }
    }

    /// Adds `values`; fixed-size blocks merged in order, so the result does not
    /// depend on the thread count.
    pub fn push(&mut self, values: &[f32]) {
        let parts: Vec<StatsAccumulator> = values
            .par_chunks(STATS_BLOCK)
            .map(|c| {
                let mut a = StatsAccumulator::new();
                a.push_serial(c);
                a
            })
            .collect();
        for p in parts {
            self.merge(&p);
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self) -> Result<GlobalStats> {
        if self.n == 0 {
            return Err(Error::Degenerate("no voxels to compute statistics from".into()));
        }
        let sigma = (self.m2 / self.n as f64).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::Degenerate(format!(
                "all {} voxels share the value {}",
                self.n, self.mean
            )));
        }
        GlobalStats::new(self.mean, sigma)
    }
}

/// Mean and population standard deviation over every voxel of every volume.
pub fn global_stats(volumes: &[ScalarVolume]) -> Result<GlobalStats> {
    if volumes.is_empty() {
        return Err(Error::Argument("global_stats needs at least one volume".into()));
    }
    let mut acc = StatsAccumulator::new();
    for v in volumes {
        acc.push(v.data());
    }
    acc.finish()
}

#[inline]
pub(crate) fn zscore_value(v: f32, stats: &GlobalStats) -> f32 {
    ((f64::from(v) - stats.mu) / stats.sigma) as f32
}

/// `(I - mu) / sigma` per voxel, as f32.
pub fn zscore_normalize(vol: &ScalarVolume, stats: &GlobalStats) -> Result<ScalarVolume> {
    stats.validate()?;
    let out: Vec<f32> = vol.data().par_iter().map(|&v| zscore_value(v, stats)).collect();
    let mut res = vol.with_data(out);
    res.meta_mut().dtype = DType::F32;
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeNormSpec {
    pub reference_particle_size_vox: f64,
    pub target_particle_size_vox: f64,
}

impl SizeNormSpec {
    pub fn new(reference_particle_size_vox: f64) -> Self {
        SizeNormSpec {
            reference_particle_size_vox,
            target_particle_size_vox: DEFAULT_TARGET_PARTICLE_SIZE_VOX,
        }
    }

    /// No resampling at all.
    pub fn identity() -> Self {
        SizeNormSpec {
            reference_particle_size_vox: DEFAULT_TARGET_PARTICLE_SIZE_VOX,
            target_particle_size_vox: DEFAULT_TARGET_PARTICLE_SIZE_VOX,
        }
    }

    pub fn scale(&self) -> Result<f64> {
        let s = self.target_particle_size_vox / self.reference_particle_size_vox;
        if !(self.reference_particle_size_vox > 0.0 && self.target_particle_size_vox > 0.0)
            || !s.is_finite()
        {
            return Err(Error::Range(format!(
                "particle sizes must be positive, got reference {} target {}",
                self.reference_particle_size_vox, self.target_particle_size_vox
            )));
        }
        Ok(s)
    }

    /// Grid shape after resampling `shape` by [`scale`](Self::scale).
    pub fn normalized_shape(&self, shape: Shape) -> Result<Shape> {
        let s = self.scale()?;
        let mut out = [0; 3];
        for a in 0..3 {
            let n = (shape[a] as f64 * s).round();
            if n < 1.0 {
                return Err(Error::Range(format!(
                    "scale {s} collapses axis {a} of length {} to zero",
                    shape[a]
                )));
            }
            out[a] = n as usize;
        }
        Ok(out)
    }
}

/// Continuous source coordinate of destination voxel `d` (voxel centres aligned).
#[inline]
fn source_coord(d: usize, src_len: usize, dst_len: usize) -> f64 {
    let s = (d as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    s.clamp(0.0, (src_len - 1) as f64)
}

/// Nearest source voxel of destination voxel `d`.
#[inline]
pub(crate) fn nearest_source(d: usize, src_len: usize, dst_len: usize) -> usize {
    let s = ((d as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
    s.min(src_len - 1)
}

/// Source box needed to interpolate the destination box `dst`.
pub(crate) fn trilinear_source_window(src_shape: Shape, dst_shape: Shape, dst: Bounds) -> Bounds {
    let mut b = Bounds::new([0; 3], [0; 3]);
    for a in 0..3 {
        let lo = source_coord(dst.lo[a], src_shape[a], dst_shape[a]).floor() as usize;
        let hi = source_coord(dst.hi[a] - 1, src_shape[a], dst_shape[a]).floor() as usize + 2;
        b.lo[a] = lo;
        b.hi[a] = hi.min(src_shape[a]);
    }
    b
}

/// Source box read by nearest-neighbour sampling of the destination box `dst`.
pub(crate) fn nearest_source_window(src_shape: Shape, dst_shape: Shape, dst: Bounds) -> Bounds {
    let mut b = Bounds::new([0; 3], [0; 3]);
    for a in 0..3 {
        b.lo[a] = nearest_source(dst.lo[a], src_shape[a], dst_shape[a]);
        b.hi[a] = nearest_source(dst.hi[a] - 1, src_shape[a], dst_shape[a]) + 1;
    }
    b
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}

/// Trilinear resampling of the destination box `dst` of a `dst_shape` grid
/// from a `src_shape` grid, of which `window` (origin `window_lo`) is loaded.
/// Every destination voxel depends only on its global position, so tiles
/// computed separately agree bit for bit with a whole-volume pass.
pub(crate) fn trilinear_region(
    window: &ScalarVolume,
    window_lo: [usize; 3],
    src_shape: Shape,
    dst_shape: Shape,
    dst: Bounds,
) -> Vec<f32> {
    let axis = |a: usize| -> Vec<(usize, usize, f64)> {
        (dst.lo[a]..dst.hi[a])
            .map(|d| {
                let s = source_coord(d, src_shape[a], dst_shape[a]);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_shape[a] - 1);
                (i0 - window_lo[a], i1 - window_lo[a], s - i0 as f64)
            })
            .collect()
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    let w = window.shape();
    let at = |x: usize, y: usize, z: usize| f64::from(window.data()[x + w[0] * (y + w[1] * z)]);
    let mut out = Vec::with_capacity(num_voxels(dst.shape()));
    for &(z0, z1, tz) in &az {
        for &(y0, y1, ty) in &ay {
            for &(x0, x1, tx) in &ax {
                let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), tx);
                let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), tx);
                let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), tx);
                let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), tx);
                let c0 = lerp(c00, c10, ty);
                let c1 = lerp(c01, c11, ty);
                out.push(lerp(c0, c1, tz) as f32);
            }
        }
    }
    out
}

/// Resamples intensities so that the reference particle size becomes the
/// target size; spacing shrinks by the same factor.
pub fn size_normalize(vol: &ScalarVolume, spec: &SizeNormSpec) -> Result<ScalarVolume> {
    let scale = spec.scale()?;
    let src = vol.shape();
    let dst = spec.normalized_shape(src)?;
    let data = trilinear_region(vol, [0; 3], src, dst, Bounds::of_shape(dst));
    let mut meta = vol.meta().clone();
    meta.shape = dst;
    meta.dtype = DType::F32;
    for s in meta.spacing_mm.iter_mut() {
        *s /= scale;
    }
    Volume::new(meta, data)
}

/// Nearest-neighbour resampling of any volume onto `shape`.
pub fn resample_nearest<T: Element>(vol: &Volume<T>, shape: Shape) -> Result<Volume<T>> {
    let src = vol.shape();
    let mut meta = vol.meta().clone();
    meta.shape = shape;
    meta.validate()?;
    for a in 0..3 {
        meta.spacing_mm[a] *= src[a] as f64 / shape[a] as f64;
    }
    let xs: Vec<usize> = (0..shape[0]).map(|d| nearest_source(d, src[0], shape[0])).collect();
    let ys: Vec<usize> = (0..shape[1]).map(|d| nearest_source(d, src[1], shape[1])).collect();
    let zs: Vec<usize> = (0..shape[2]).map(|d| nearest_source(d, src[2], shape[2])).collect();
    let mut data = Vec::with_capacity(num_voxels(shape));
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                data.push(vol.get([x, y, z]));
            }
        }
    }
    Volume::new(meta, data)
}

/// Brings a label map predicted at normalised scale back onto the original grid.
pub fn size_denormalize_labels(labels: &LabelVolume, original_shape: Shape) -> Result<LabelVolume> {
    resample_nearest(labels, original_shape)
}

/// Particle diameter in voxels from a physical size and the voxel spacing.
pub fn estimate_voxel_particle_size(particle_size_mm: f64, spacing_mm: f64) -> Result<f64> {
    if !(particle_size_mm > 0.0 && spacing_mm > 0.0) {
        return Err(Error::Range(format!(
            "particle size {particle_size_mm} mm and spacing {spacing_mm} mm must be positive"
        )));
    }
    Ok(particle_size_mm / spacing_mm)
}

/// Inverse of [`estimate_voxel_particle_size`].
pub fn particle_size_mm(particle_size_vox: f64, spacing_mm: f64) -> Result<f64> {
    if !(particle_size_vox > 0.0 && spacing_mm > 0.0) {
        return Err(Error::Range(format!(
            "particle size {particle_size_vox} vox and spacing {spacing_mm} mm must be positive"
        )));
    }
    Ok(particle_size_vox * spacing_mm)
}
