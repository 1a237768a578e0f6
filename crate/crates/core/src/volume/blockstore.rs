//! Chunked on-disk volumes.
//!
//! Layout of a store directory:
//!
//! ```text
//! root/meta.json        {kind, shape, spacing_mm, dtype, chunk_shape, origin_name}
//! root/{cx}_{cy}_{cz}.blk   little-endian raw values of one grid cell, x-fastest
//! ```
//!
//! The sidecar is written last, so a directory without `meta.json` is an
//! unfinished store.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raw::decode_scalar;
use super::{
    num_voxels, Bounds, DType, Element, Endianness, LabelVolume, ScalarVolume, SemanticVolume,
    Shape, Volume, VolumeKind, VolumeMeta,
};
use crate::{Error, Result};

const SIDECAR: &str = "meta.json";

/// Element types that can be persisted in a block store.
pub trait StoreElement: Element {
    const KIND: VolumeKind;

    fn supports(dtype: DType) -> bool;

    fn encode(values: &[Self], dtype: DType, out: &mut Vec<u8>) -> Result<()>;

    fn decode(bytes: &[u8], dtype: DType) -> Vec<Self>;
}

impl StoreElement for f32 {
    const KIND: VolumeKind = VolumeKind::Scalar;

    fn supports(dtype: DType) -> bool {
        matches!(dtype, DType::U8 | DType::U16 | DType::F32)
    }

    fn encode(values: &[Self], dtype: DType, out: &mut Vec<u8>) -> Result<()> {
        let integral = |v: f32, max: f32| -> Result<f32> {
            if v.fract() == 0.0 && (0.0..=max).contains(&v) {
                Ok(v)
            } else {
                Err(Error::Range(format!("value {v} does not fit dtype {dtype}")))
            }
        };
        match dtype {
            DType::U8 => {
                for &v in values {
                    out.push(integral(v, 255.0)? as u8);
                }
            }
            DType::U16 => {
                for &v in values {
                    out.extend_from_slice(&(integral(v, 65535.0)? as u16).to_le_bytes());
                }
            }
            DType::F32 => {
                for &v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            DType::U32 => return Err(Error::Argument("scalar volumes cannot be stored as u32".into())),
        }
        Ok(())
    }

    fn decode(bytes: &[u8], dtype: DType) -> Vec<Self> {
        decode_scalar(bytes, dtype, Endianness::Little)
    }
}

impl StoreElement for u32 {
    const KIND: VolumeKind = VolumeKind::Label;

    fn supports(dtype: DType) -> bool {
        dtype == DType::U32
    }

    fn encode(values: &[Self], _dtype: DType, out: &mut Vec<u8>) -> Result<()> {
        for &v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    fn decode(bytes: &[u8], _dtype: DType) -> Vec<Self> {
        bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

impl StoreElement for u8 {
    const KIND: VolumeKind = VolumeKind::Semantic;

    fn supports(dtype: DType) -> bool {
        dtype == DType::U8
    }

    fn encode(values: &[Self], _dtype: DType, out: &mut Vec<u8>) -> Result<()> {
        out.extend_from_slice(values);
        Ok(())
    }

    fn decode(bytes: &[u8], _dtype: DType) -> Vec<Self> {
        bytes.to_vec()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    kind: VolumeKind,
    shape: Shape,
    spacing_mm: [f64; 3],
    dtype: DType,
    chunk_shape: Shape,
    #[serde(default)]
    origin_name: String,
}

/// A finished, readable block store.
#[derive(Debug, Clone)]
pub struct BlockStore {
    root: PathBuf,
    meta: VolumeMeta,
    chunk_shape: Shape,
    kind: VolumeKind,
}

/// A volume of whichever kind a store holds.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Scalar(ScalarVolume),
    Label(LabelVolume),
    Semantic(SemanticVolume),
}

impl AnyVolume {
    pub fn kind(&self) -> VolumeKind {
        match self {
            AnyVolume::Scalar(_) => VolumeKind::Scalar,
            AnyVolume::Label(_) => VolumeKind::Label,
            AnyVolume::Semantic(_) => VolumeKind::Semantic,
        }
    }
}

fn grid_of(shape: Shape, chunk: Shape) -> Shape {
    [
        shape[0].div_ceil(chunk[0]),
        shape[1].div_ceil(chunk[1]),
        shape[2].div_ceil(chunk[2]),
    ]
}

fn chunk_bounds_of(shape: Shape, chunk: Shape, c: [usize; 3]) -> Bounds {
    let mut b = Bounds::new([0; 3], [0; 3]);
    for a in 0..3 {
        b.lo[a] = c[a] * chunk[a];
        b.hi[a] = ((c[a] + 1) * chunk[a]).min(shape[a]);
    }
    b
}

fn raster_cells(grid: Shape) -> impl Iterator<Item = [usize; 3]> {
    (0..grid[2]).flat_map(move |z| (0..grid[1]).flat_map(move |y| (0..grid[0]).map(move |x| [x, y, z])))
}

fn chunk_file(root: &Path, c: [usize; 3]) -> PathBuf {
    root.join(format!("{}_{}_{}.blk", c[0], c[1], c[2]))
}

impl BlockStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let side = root.join(SIDECAR);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::parse(&side, e))?;
        let meta = VolumeMeta {
            shape: sc.shape,
            spacing_mm: sc.spacing_mm,
            dtype: sc.dtype,
            origin_name: sc.origin_name,
        };
        meta.validate()
            .map_err(|e| Error::Integrity(format!("{}: {e}", side.display())))?;
        if sc.chunk_shape.contains(&0) {
            return Err(Error::Integrity(format!("{}: zero chunk axis", side.display())));
        }
        Ok(BlockStore {
            root,
            meta,
            chunk_shape: sc.chunk_shape,
            kind: sc.kind,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn shape(&self) -> Shape {
        self.meta.shape
    }

    pub fn chunk_shape(&self) -> Shape {
        self.chunk_shape
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    /// Number of grid cells per axis.
    pub fn grid_shape(&self) -> Shape {
        grid_of(self.meta.shape, self.chunk_shape)
    }

    /// Grid cells in raster order.
    pub fn chunks(&self) -> Vec<[usize; 3]> {
        raster_cells(self.grid_shape()).collect()
    }

    pub fn chunk_bounds(&self, c: [usize; 3]) -> Bounds {
        chunk_bounds_of(self.meta.shape, self.chunk_shape, c)
    }

    pub fn chunk_path(&self, c: [usize; 3]) -> PathBuf {
        chunk_file(&self.root, c)
    }

    fn check_kind<T: StoreElement>(&self) -> Result<()> {
        if self.kind != T::KIND {
            return Err(Error::Argument(format!(
                "{} holds a {:?} volume, expected {:?}",
                self.root.display(),
                self.kind,
                T::KIND
            )));
        }
        Ok(())
    }

    pub fn read_chunk<T: StoreElement>(&self, c: [usize; 3]) -> Result<Volume<T>> {
        self.check_kind::<T>()?;
        let b = self.chunk_bounds(c);
        let path = self.chunk_path(c);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::Integrity(format!(
                    "missing chunk ({}, {}, {}) in {}",
                    c[0],
                    c[1],
                    c[2],
                    self.root.display()
                )))
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        let n = num_voxels(b.shape());
        if bytes.len() != n * self.meta.dtype.width() {
            return Err(Error::Integrity(format!(
                "chunk ({}, {}, {}) has {} bytes, expected {}",
                c[0],
                c[1],
                c[2],
                bytes.len(),
                n * self.meta.dtype.width()
            )));
        }
        let mut meta = self.meta.clone();
        meta.shape = b.shape();
        Volume::new(meta, T::decode(&bytes, self.meta.dtype))
    }

    /// Assembles the box `b` from every cell it overlaps.
    pub fn read_region<T: StoreElement>(&self, b: Bounds) -> Result<Volume<T>> {
        self.check_kind::<T>()?;
        let full = Bounds::of_shape(self.meta.shape);
        if b.is_empty() || b.intersect(&full) != b {
            return Err(Error::Range(format!(
                "region {b:?} outside store of shape {:?}",
                self.meta.shape
            )));
        }
        let mut meta = self.meta.clone();
        meta.shape = b.shape();
        let mut out = Volume::new(meta, vec![T::default(); num_voxels(b.shape())])?;
        let (c_lo, c_hi) = self.cell_range(b);
        for cz in c_lo[2]..c_hi[2] {
            for cy in c_lo[1]..c_hi[1] {
                for cx in c_lo[0]..c_hi[0] {
                    let c = [cx, cy, cz];
                    let cb = self.chunk_bounds(c);
                    let chunk = self.read_chunk::<T>(c)?;
                    let ov = cb.intersect(&b);
                    let dst = sub(ov.lo, b.lo);
                    let src = sub(ov.lo, cb.lo);
                    out.paste_region(Bounds::new(dst, add(dst, ov.shape())), &chunk, src);
                }
            }
        }
        Ok(out)
    }

    pub fn read_all<T: StoreElement>(&self) -> Result<Volume<T>> {
        let mut v = self.read_region::<T>(Bounds::of_shape(self.meta.shape))?;
        *v.meta_mut() = self.meta.clone();
        Ok(v)
    }

    fn cell_range(&self, b: Bounds) -> ([usize; 3], [usize; 3]) {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            lo[a] = b.lo[a] / self.chunk_shape[a];
            hi[a] = (b.hi[a] - 1) / self.chunk_shape[a] + 1;
        }
        (lo, hi)
    }
}

fn sub(a: [usize; 3], b: [usize; 3]) -> [usize; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: [usize; 3], b: [usize; 3]) -> [usize; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Incremental writer: cells may be written in any order and from several
/// threads; [`finish`](Self::finish) checks completeness and writes the sidecar.
#[derive(Debug)]
pub struct BlockStoreWriter {
    store: BlockStore,
    rmw: Mutex<()>,
}

impl BlockStoreWriter {
    pub fn create<T: StoreElement>(
        root: impl AsRef<Path>,
        meta: VolumeMeta,
        chunk_shape: Shape,
    ) -> Result<Self> {
        meta.validate()?;
        if chunk_shape.contains(&0) {
            return Err(Error::Argument(format!("chunk shape {chunk_shape:?} has a zero axis")));
        }
        if !T::supports(meta.dtype) {
            return Err(Error::Argument(format!(
                "{:?} volumes cannot be stored as {}",
                T::KIND,
                meta.dtype
            )));
        }
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        clear_store_files(&root)?;
        Ok(BlockStoreWriter {
            store: BlockStore {
                root,
                meta,
                chunk_shape,
                kind: T::KIND,
            },
            rmw: Mutex::new(()),
        })
    }

    pub fn layout(&self) -> &BlockStore {
        &self.store
    }

    pub fn write_chunk<T: StoreElement>(&self, c: [usize; 3], values: &[T]) -> Result<()> {
        self.store.check_kind::<T>()?;
        let b = self.store.chunk_bounds(c);
        if values.len() != num_voxels(b.shape()) {
            return Err(Error::Argument(format!(
                "chunk ({}, {}, {}) needs {} values, got {}",
                c[0],
                c[1],
                c[2],
                num_voxels(b.shape()),
                values.len()
            )));
        }
        let mut bytes = Vec::with_capacity(values.len() * self.store.meta.dtype.width());
        T::encode(values, self.store.meta.dtype, &mut bytes)?;
        let path = self.store.chunk_path(c);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    /// Writes `vol` with its origin at `lo`, read-modify-writing every cell it
    /// touches. Cells not yet on disk start out as `T::default()`.
    pub fn write_region<T: StoreElement>(&self, lo: [usize; 3], vol: &Volume<T>) -> Result<()> {
        let b = Bounds::new(lo, add(lo, vol.shape()));
        if b.intersect(&Bounds::of_shape(self.store.meta.shape)) != b {
            return Err(Error::Range(format!("region {b:?} outside store")));
        }
        let _guard = self.rmw.lock().unwrap_or_else(|p| p.into_inner());
        let (c_lo, c_hi) = self.store.cell_range(b);
        for cz in c_lo[2]..c_hi[2] {
            for cy in c_lo[1]..c_hi[1] {
                for cx in c_lo[0]..c_hi[0] {
                    let c = [cx, cy, cz];
                    let cb = self.store.chunk_bounds(c);
                    let mut cell = if self.store.chunk_path(c).exists() {
                        self.store.read_chunk::<T>(c)?
                    } else {
                        let mut meta = self.store.meta.clone();
                        meta.shape = cb.shape();
                        Volume::new(meta, vec![T::default(); num_voxels(cb.shape())])?
                    };
                    let ov = cb.intersect(&b);
                    let dst = sub(ov.lo, cb.lo);
                    cell.paste_region(Bounds::new(dst, add(dst, ov.shape())), vol, sub(ov.lo, b.lo));
                    self.write_chunk(c, cell.data())?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<BlockStore> {
        for c in self.store.chunks() {
            if !self.store.chunk_path(c).exists() {
                return Err(Error::Integrity(format!(
                    "chunk ({}, {}, {}) was never written to {}",
                    c[0],
                    c[1],
                    c[2],
                    self.store.root.display()
                )));
            }
        }
        let sc = Sidecar {
            kind: self.store.kind,
            shape: self.store.meta.shape,
            spacing_mm: self.store.meta.spacing_mm,
            dtype: self.store.meta.dtype,
            chunk_shape: self.store.chunk_shape,
            origin_name: self.store.meta.origin_name.clone(),
        };
        let side = self.store.root.join(SIDECAR);
        let text = serde_json::to_string_pretty(&sc).expect("sidecar serialises");
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
        Ok(self.store)
    }
}

fn clear_store_files(root: &Path) -> Result<()> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name == SIDECAR || name.ends_with(".blk") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Splits `vol` into `chunk_shape` cells under `root`.
pub fn write_blockstore<T: StoreElement>(
    vol: &Volume<T>,
    root: impl AsRef<Path>,
    chunk_shape: Shape,
) -> Result<BlockStore> {
    let writer = BlockStoreWriter::create::<T>(root, vol.meta().clone(), chunk_shape)?;
    let layout = writer.layout().clone();
    layout.chunks().par_iter().try_for_each(|&c| {
        let cell = vol.crop_unchecked(layout.chunk_bounds(c));
        writer.write_chunk(c, cell.data())
    })?;
    writer.finish()
}

/// Reads a whole store back as the volume kind its sidecar declares.
pub fn read_blockstore(root: impl AsRef<Path>) -> Result<AnyVolume> {
    let store = BlockStore::open(root)?;
    Ok(match store.kind() {
        VolumeKind::Scalar => AnyVolume::Scalar(store.read_all()?),
        VolumeKind::Label => AnyVolume::Label(store.read_all()?),
        VolumeKind::Semantic => AnyVolume::Semantic(store.read_all()?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: Shape) -> ScalarVolume {
        let mut v = Volume::from_fn(shape, |p| (p[0] + 3 * p[1] + 7 * p[2]) as f32);
        v.meta_mut().dtype = DType::U16;
        v
    }

    #[test]
    fn chunk_grid_uses_ceil_division() {
        let dir = tempfile::tempdir().unwrap();
        let store = write_blockstore(&ramp([10, 10, 10]), dir.path(), [4, 4, 4]).unwrap();
        assert_eq!(store.grid_shape(), [3, 3, 3]);
        let files = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "blk"))
            .count();
        assert_eq!(files, 27);
        assert_eq!(store.chunk_bounds([2, 2, 2]).shape(), [2, 2, 2]);
        assert_eq!(store.chunk_bounds([1, 2, 0]).shape(), [4, 2, 4]);
    }

    #[test]
    fn small_volume_single_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let v = ramp([3, 2, 5]);
        let store = write_blockstore(&v, dir.path(), [8, 8, 8]).unwrap();
        assert_eq!(store.chunks(), vec![[0, 0, 0]]);
        assert_eq!(store.chunk_bounds([0, 0, 0]).shape(), [3, 2, 5]);
        assert_eq!(store.read_all::<f32>().unwrap(), v);
    }

    #[test]
    fn roundtrip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let scalar = ramp([7, 5, 6]);
        let labels = Volume::from_fn([7, 5, 6], |p| (p[0] * p[1] + p[2]) as u32 * 1000);
        let sem = Volume::from_fn([7, 5, 6], |p| ((p[0] + p[1] + p[2]) % 3) as u8);
        let mut f = Volume::from_fn([7, 5, 6], |p| p[0] as f32 * 0.1 - 1.5);
        f.meta_mut().spacing_mm = [0.002, 0.002, 0.004];
        write_blockstore(&scalar, dir.path().join("s"), [3, 2, 4]).unwrap();
        write_blockstore(&labels, dir.path().join("l"), [3, 2, 4]).unwrap();
        write_blockstore(&sem, dir.path().join("m"), [3, 2, 4]).unwrap();
        write_blockstore(&f, dir.path().join("f"), [4, 4, 4]).unwrap();
        assert_eq!(read_blockstore(dir.path().join("s")).unwrap(), AnyVolume::Scalar(scalar));
        assert_eq!(read_blockstore(dir.path().join("l")).unwrap(), AnyVolume::Label(labels));
        assert_eq!(read_blockstore(dir.path().join("m")).unwrap(), AnyVolume::Semantic(sem));
        assert_eq!(read_blockstore(dir.path().join("f")).unwrap(), AnyVolume::Scalar(f));
    }

    #[test]
    fn missing_chunk_names_coordinate() {
        let dir = tempfile::tempdir().unwrap();
        write_blockstore(&ramp([10, 10, 10]), dir.path(), [4, 4, 4]).unwrap();
        fs::remove_file(dir.path().join("1_0_0.blk")).unwrap();
        let err = read_blockstore(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("(1, 0, 0)"), "{err}");
    }

    #[test]
    fn corrupted_sidecar_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        write_blockstore(&ramp([4, 4, 4]), dir.path(), [4, 4, 4]).unwrap();
        fs::write(dir.path().join("meta.json"), "{\"kind\": \"scalar\", \"shape\": [4,").unwrap();
        assert!(matches!(read_blockstore(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_integral_values_rejected_for_u16() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Volume::filled([2, 2, 2], 0.5f32);
        v.meta_mut().dtype = DType::U16;
        assert!(write_blockstore(&v, dir.path(), [2, 2, 2]).is_err());
    }

    #[test]
    fn region_reads_span_cells() {
        let dir = tempfile::tempdir().unwrap();
        let v = ramp([9, 8, 7]);
        let store = write_blockstore(&v, dir.path(), [4, 3, 2]).unwrap();
        let b = Bounds::new([2, 1, 1], [8, 7, 6]);
        let expected = v.crop(b.lo, b.hi).unwrap();
        assert_eq!(store.read_region::<f32>(b).unwrap().data(), expected.data());
    }

    #[test]
    fn region_writes_read_modify_write() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VolumeMeta::isotropic([6, 6, 6], DType::U32);
        let w = BlockStoreWriter::create::<u32>(dir.path(), meta, [4, 4, 4]).unwrap();
        let a = Volume::filled([3, 6, 6], 1u32);
        let b = Volume::filled([3, 6, 6], 2u32);
        w.write_region([3, 0, 0], &b).unwrap();
        w.write_region([0, 0, 0], &a).unwrap();
        let store = w.finish().unwrap();
        let all = store.read_all::<u32>().unwrap();
        for z in 0..6 {
            for y in 0..6 {
                for x in 0..6 {
                    assert_eq!(all.get([x, y, z]), if x < 3 { 1 } else { 2 });
                }
            }
        }
    }

    #[test]
    fn unfinished_store_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VolumeMeta::isotropic([6, 6, 6], DType::U8);
        let w = BlockStoreWriter::create::<u8>(dir.path(), meta, [4, 4, 4]).unwrap();
        w.write_chunk([0, 0, 0], &[0u8; 64]).unwrap();
        assert!(matches!(w.finish(), Err(Error::Integrity(_))));
    }
}
