//! Dense volumetric containers and their persistence.
//!
//! Every grid in the crate is a [`Volume<T>`]: a [`VolumeMeta`] header plus a
//! flat buffer in x-fastest order. The aliases [`ScalarVolume`],
//! [`LabelVolume`], [`SemanticVolume`] and [`Mask`] name the element types the
//! pipeline actually uses.

mod blockstore;
mod raw;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use blockstore::{read_blockstore, write_blockstore, AnyVolume, BlockStore, BlockStoreWriter};
pub use raw::{import_raw, Endianness};

/// Voxels per axis, x first.
pub type Shape = [usize; 3];

/// Semantic class values of a border-core map.
pub mod class {
    pub const BACKGROUND: u8 = 0;
    pub const CORE: u8 = 1;
    pub const BORDER: u8 = 2;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    U16,
    U32,
    F32,
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::U32 | DType::F32 => 4,
        }
    }
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DType::U8 => "u8",
            DType::U16 => "u16",
            DType::U32 => "u32",
            DType::F32 => "f32",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(DType::U8),
            "u16" => Ok(DType::U16),
            "u32" => Ok(DType::U32),
            "f32" => Ok(DType::F32),
            other => Err(Error::Argument(format!("unknown dtype {other:?}"))),
        }
    }
}

/// What a stored volume holds; recorded in the block-store sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Scalar,
    Label,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub shape: Shape,
    pub spacing_mm: [f64; 3],
    pub dtype: DType,
    #[serde(default)]
    pub origin_name: String,
}

impl VolumeMeta {
    pub fn new(shape: Shape, spacing_mm: [f64; 3], dtype: DType) -> Result<Self> {
        let meta = VolumeMeta {
            shape,
            spacing_mm,
            dtype,
            origin_name: String::new(),
        };
        meta.validate()?;
        Ok(meta)
    }

    /// Unit spacing, unnamed.
    pub fn isotropic(shape: Shape, dtype: DType) -> Self {
        VolumeMeta {
            shape,
            spacing_mm: [1.0; 3],
            dtype,
            origin_name: String::new(),
        }
    }

    pub fn with_origin_name(mut self, name: impl Into<String>) -> Self {
        self.origin_name = name.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) {
            return Err(Error::Range(format!("shape {:?} has a zero axis", self.shape)));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Range(format!(
                "spacing {:?} must be positive and finite",
                self.spacing_mm
            )));
        }
        Ok(())
    }

    pub fn num_voxels(&self) -> usize {
        num_voxels(self.shape)
    }
}

/// Voxel element types.
pub trait Element: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    const DEFAULT_DTYPE: DType;
}

impl Element for f32 {
    const DEFAULT_DTYPE: DType = DType::F32;
}
impl Element for u32 {
    const DEFAULT_DTYPE: DType = DType::U32;
}
impl Element for u8 {
    const DEFAULT_DTYPE: DType = DType::U8;
}
impl Element for bool {
    const DEFAULT_DTYPE: DType = DType::U8;
}

#[inline]
pub fn num_voxels(shape: Shape) -> usize {
    shape[0] * shape[1] * shape[2]
}

#[inline]
pub fn linear_index(shape: Shape, p: [usize; 3]) -> usize {
    p[0] + shape[0] * (p[1] + shape[1] * p[2])
}

#[inline]
pub fn coords_of(shape: Shape, i: usize) -> [usize; 3] {
    let x = i % shape[0];
    let r = i / shape[0];
    [x, r % shape[1], r / shape[1]]
}

/// Half-open axis-aligned box `[lo, hi)` in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Bounds {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        Bounds { lo, hi }
    }

    pub fn of_shape(shape: Shape) -> Self {
        Bounds { lo: [0; 3], hi: shape }
    }

    pub fn shape(&self) -> Shape {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] < self.hi[a])
    }

    /// Grown by `margin` on every side, clipped to `[0, shape)`.
    pub fn expand(&self, margin: usize, shape: Shape) -> Self {
        let mut out = *self;
        for a in 0..3 {
            out.lo[a] = self.lo[a].saturating_sub(margin);
            out.hi[a] = (self.hi[a] + margin).min(shape[a]);
        }
        out
    }

    pub fn intersect(&self, other: &Bounds) -> Bounds {
        let mut out = *self;
        for a in 0..3 {
            out.lo[a] = self.lo[a].max(other.lo[a]);
            out.hi[a] = self.hi[a].min(other.hi[a]).max(out.lo[a]);
        }
        out
    }
}

/// A dense 3D grid with metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    meta: VolumeMeta,
    data: Vec<T>,
}

/// CT intensities `I`; stored as f32 whatever the on-disk dtype.
pub type ScalarVolume = Volume<f32>;
/// Instance ids, 0 = background.
pub type LabelVolume = Volume<u32>;
/// Border-core classes, see [`class`].
pub type SemanticVolume = Volume<u8>;
pub type Mask = Volume<bool>;

impl<T: Element> Volume<T> {
    pub fn new(meta: VolumeMeta, data: Vec<T>) -> Result<Self> {
        meta.validate()?;
        if data.len() != meta.num_voxels() {
            return Err(Error::Malformed(format!(
                "volume of shape {:?} needs {} values, got {}",
                meta.shape,
                meta.num_voxels(),
                data.len()
            )));
        }
        Ok(Volume { meta, data })
    }

    /// Unit-spacing volume filled with `value`.
    pub fn filled(shape: Shape, value: T) -> Self {
        let meta = VolumeMeta::isotropic(shape, T::DEFAULT_DTYPE);
        Volume {
            data: vec![value; meta.num_voxels()],
            meta,
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let meta = VolumeMeta::isotropic(shape, T::DEFAULT_DTYPE);
        let mut data = Vec::with_capacity(meta.num_voxels());
        for z in 0..shape[2] {
            for y in 0..shape[1] {
                for x in 0..shape[0] {
                    data.push(f([x, y, z]));
                }
            }
        }
        Volume { meta, data }
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut VolumeMeta {
        &mut self.meta
    }

    pub fn shape(&self) -> Shape {
        self.meta.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.meta.spacing_mm
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, p: [usize; 3]) -> usize {
        linear_index(self.meta.shape, p)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        coords_of(self.meta.shape, i)
    }

    #[inline]
    pub fn get(&self, p: [usize; 3]) -> T {
        self.data[self.index(p)]
    }

    #[inline]
    pub fn set(&mut self, p: [usize; 3], v: T) {
        let i = self.index(p);
        self.data[i] = v;
    }

    /// Same geometry, new element buffer.
    pub fn with_data<U: Element>(&self, data: Vec<U>) -> Volume<U> {
        assert_eq!(data.len(), self.data.len(), "buffer length must match the grid");
        let mut meta = self.meta.clone();
        meta.dtype = U::DEFAULT_DTYPE;
        Volume { meta, data }
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    /// Copy of the sub-box `[lo, hi)`; spacing is preserved.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if lo[a] >= hi[a] || hi[a] > self.meta.shape[a] {
                return Err(Error::Range(format!(
                    "crop [{lo:?}, {hi:?}) is empty or exceeds shape {:?}",
                    self.meta.shape
                )));
            }
        }
        Ok(self.crop_unchecked(Bounds::new(lo, hi)))
    }

    pub(crate) fn crop_unchecked(&self, b: Bounds) -> Self {
        let shape = b.shape();
        let mut data = Vec::with_capacity(num_voxels(shape));
        for z in b.lo[2]..b.hi[2] {
            for y in b.lo[1]..b.hi[1] {
                let start = self.index([b.lo[0], y, z]);
                data.extend_from_slice(&self.data[start..start + shape[0]]);
            }
        }
        let mut meta = self.meta.clone();
        meta.shape = shape;
        Volume { meta, data }
    }

    /// Writes `src` into this volume with its origin at `lo`.
    pub fn paste(&mut self, lo: [usize; 3], src: &Volume<T>) {
        let s = src.shape();
        for z in 0..s[2] {
            for y in 0..s[1] {
                let dst = self.index([lo[0], lo[1] + y, lo[2] + z]);
                let from = src.index([0, y, z]);
                self.data[dst..dst + s[0]].copy_from_slice(&src.data[from..from + s[0]]);
            }
        }
    }

    /// Copies the block of `src` starting at `src_lo` into region `b`.
    pub(crate) fn paste_region(&mut self, b: Bounds, src: &Volume<T>, src_lo: [usize; 3]) {
        let s = b.shape();
        for z in 0..s[2] {
            for y in 0..s[1] {
                let dst = self.index([b.lo[0], b.lo[1] + y, b.lo[2] + z]);
                let from = src.index([src_lo[0], src_lo[1] + y, src_lo[2] + z]);
                self.data[dst..dst + s[0]].copy_from_slice(&src.data[from..from + s[0]]);
            }
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Mask {
        self.map(|b| !b)
    }
}

impl LabelVolume {
    /// Largest id present, 0 for an empty volume.
    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn foreground(&self) -> Mask {
        self.map(|l| l != 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip_is_x_fastest() {
        let shape = [4, 3, 2];
        assert_eq!(linear_index(shape, [1, 0, 0]), 1);
        assert_eq!(linear_index(shape, [0, 1, 0]), 4);
        assert_eq!(linear_index(shape, [0, 0, 1]), 12);
        for i in 0..24 {
            assert_eq!(linear_index(shape, coords_of(shape, i)), i);
        }
    }

    #[test]
    fn crop_identity() {
        let v = Volume::from_fn([5, 4, 3], |p| (p[0] + 10 * p[1] + 100 * p[2]) as u32);
        assert_eq!(v.crop([0, 0, 0], v.shape()).unwrap(), v);
    }

    #[test]
    fn crop_preserves_sphere_voxel_count() {
        let c = 8.0;
        let v = Volume::from_fn([17, 17, 17], |p| {
            let d2: f64 = p.iter().map(|&q| (q as f64 - c).powi(2)).sum();
            u32::from(d2 <= 16.0)
        });
        let before = v.data().iter().filter(|&&l| l == 1).count();
        let cropped = v.crop([3, 3, 3], [14, 14, 14]).unwrap();
        let after = cropped.data().iter().filter(|&&l| l == 1).count();
        assert_eq!(before, after);
        assert!(before > 200);
    }

    #[test]
    fn crop_out_of_bounds_is_range_error() {
        let v: Volume<u8> = Volume::filled([4, 4, 4], 0);
        assert!(matches!(v.crop([0, 0, 0], [5, 4, 4]), Err(Error::Range(_))));
        assert!(matches!(v.crop([2, 0, 0], [2, 4, 4]), Err(Error::Range(_))));
    }

    #[test]
    fn crop_of_crop_composes() {
        let v = Volume::from_fn([9, 8, 7], |p| (p[0] * 7 + p[1] * 3 + p[2]) as f32);
        let a = v.crop([1, 2, 1], [8, 7, 6]).unwrap();
        let b = a.crop([2, 1, 1], [5, 4, 3]).unwrap();
        let direct = v.crop([3, 3, 2], [6, 6, 4]).unwrap();
        assert_eq!(b, direct);
    }

    #[test]
    fn crop_keeps_spacing() {
        let meta = VolumeMeta::new([4, 4, 4], [0.5, 0.25, 2.0], DType::F32).unwrap();
        let v = Volume::new(meta, vec![0f32; 64]).unwrap();
        assert_eq!(v.crop([1, 1, 1], [3, 3, 3]).unwrap().spacing(), [0.5, 0.25, 2.0]);
    }

    #[test]
    fn meta_rejects_zero_axes_and_bad_spacing() {
        assert!(VolumeMeta::new([0, 1, 1], [1.0; 3], DType::U8).is_err());
        assert!(VolumeMeta::new([1, 1, 1], [1.0, 0.0, 1.0], DType::U8).is_err());
    }
}
