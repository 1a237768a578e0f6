//! Block-store decode with bounded memory.
//!
//! 1. Per cell: label core components inside the cell, measure how many of
//!    their voxels sit near the core surface (reading a small halo so the
//!    surface test sees across cell faces), and park the local ids in a
//!    scratch store.
//! 2. Per cell: pair up ids of core voxels that touch across cell faces.
//! 3. One thread merges the pairs, applies the filter to whole components and
//!    numbers survivors by their first voxel in raster order.
//! 4. Per cell: grow cores inside a window with a halo of the decode reach
//!    and write the cell.
//!
//! Numbering and tie-breaking match [`decode`](super::decode), so the output
//! is voxel-for-voxel the in-memory result.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{grow_cores, is_removed, near_surface, BorderCoreConfig};
use crate::morph::{for_each_neighbor, label_components, Connectivity, UnionFind};
use crate::volume::{
    class, coords_of, linear_index, BlockStore, BlockStoreWriter, Bounds, LabelVolume,
    SemanticVolume, Shape, VolumeKind,
};
use crate::{DType, Error, Result};

#[derive(Debug, Clone, Copy)]
struct Component {
    count: u64,
    near: u64,
    first: u64,
}

fn scratch_path(out_root: &Path) -> PathBuf {
    let mut s = out_root.as_os_str().to_owned();
    s.push(".cores.tmp");
    PathBuf::from(s)
}

fn cell_of(p: [usize; 3], chunk: Shape) -> [usize; 3] {
    [p[0] / chunk[0], p[1] / chunk[1], p[2] / chunk[2]]
}

/// Decodes a semantic store cell by cell into a new label store at `out_root`
/// with the same chunking.
pub fn decode_streaming(
    store: &BlockStore,
    cfg: &BorderCoreConfig,
    out_root: impl AsRef<Path>,
) -> Result<BlockStore> {
    if store.kind() != VolumeKind::Semantic {
        return Err(Error::Argument(format!(
            "decode needs a semantic store, {} holds {:?}",
            store.root().display(),
            store.kind()
        )));
    }
    let out_root = out_root.as_ref();
    let shape = store.shape();
    let chunk = store.chunk_shape();
    let grid = store.grid_shape();
    let cells = store.chunks();
    let mut label_meta = store.meta().clone();
    label_meta.dtype = DType::U32;

    let scratch_root = scratch_path(out_root);
    let scratch = BlockStoreWriter::create::<u32>(&scratch_root, label_meta.clone(), chunk)?;
    let filter_halo = cfg.filter_halo();
    let local: Vec<Vec<Component>> = cells
        .par_iter()
        .map(|&c| -> Result<Vec<Component>> {
            let cell = store.chunk_bounds(c);
            let win = cell.expand(filter_halo, shape);
            let sem: SemanticVolume = store.read_region(win)?;
            let core_w: Vec<bool> = sem.data().iter().map(|&v| v == class::CORE).collect();
            let near_w = near_surface(win.shape(), &core_w, cfg.filter_min_distance);
            let cs = cell.shape();
            let n = cs[0] * cs[1] * cs[2];
            let mut core = Vec::with_capacity(n);
            let mut near = Vec::with_capacity(n);
            for i in 0..n {
                let q = coords_of(cs, i);
                let j = linear_index(win.shape(), [0, 1, 2].map(|a| q[a] + cell.lo[a] - win.lo[a]));
                core.push(core_w[j]);
                near.push(near_w[j]);
            }
            let (ids, k) = label_components(cs, &core, Connectivity::TwentySix);
            let mut comps = vec![
                Component {
                    count: 0,
                    near: 0,
                    first: u64::MAX
                };
                k as usize
            ];
            for (i, &l) in ids.iter().enumerate() {
                if l == 0 {
                    continue;
                }
                let comp = &mut comps[l as usize - 1];
                if comp.count == 0 {
                    let q = coords_of(cs, i);
                    comp.first = linear_index(shape, [0, 1, 2].map(|a| q[a] + cell.lo[a])) as u64;
                }
                comp.count += 1;
                comp.near += u64::from(near[i]);
            }
            scratch.write_chunk(c, &ids)?;
            Ok(comps)
        })
        .collect::<Result<_>>()?;
    let scratch = scratch.finish()?;

    let mut offset = Vec::with_capacity(cells.len());
    let mut total = 0usize;
    for comps in &local {
        offset.push(total);
        total += comps.len();
    }
    let cell_rank = |c: [usize; 3]| c[0] + grid[0] * (c[1] + grid[1] * c[2]);
    let gid = |c: [usize; 3], l: u32| (offset[cell_rank(c)] + l as usize - 1) as u32;

    let pairs: Vec<Vec<(u32, u32)>> = cells
        .par_iter()
        .map(|&c| -> Result<Vec<(u32, u32)>> {
            let cell = store.chunk_bounds(c);
            let win = cell.expand(1, shape);
            let ids: LabelVolume = scratch.read_region(win)?;
            let ws = win.shape();
            let mut out = Vec::new();
            for (i, &l) in ids.data().iter().enumerate() {
                let q = coords_of(ws, i);
                let p = [0, 1, 2].map(|a| q[a] + win.lo[a]);
                if l == 0 || !cell.contains(p) {
                    continue;
                }
                let on_face = (0..3).any(|a| p[a] == cell.lo[a] || p[a] + 1 == cell.hi[a]);
                if !on_face {
                    continue;
                }
                for_each_neighbor(ws, q, Connectivity::TwentySix.offsets(), |j, r| {
                    let m = ids.data()[j];
                    let g = [0, 1, 2].map(|a| r[a] + win.lo[a]);
                    if m != 0 && !cell.contains(g) {
                        out.push((gid(c, l), gid(cell_of(g, chunk), m)));
                    }
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut uf = UnionFind::new(total);
    for list in &pairs {
        for &(a, b) in list {
            uf.union(a, b);
        }
    }
    drop(pairs);
    let mut merged: Vec<Option<Component>> = vec![None; total];
    let mut root = vec![0u32; total];
    for (k, comp) in local.iter().flatten().enumerate() {
        let r = uf.find(k as u32);
        root[k] = r;
        let m = merged[r as usize].get_or_insert(Component {
            count: 0,
            near: 0,
            first: u64::MAX,
        });
        m.count += comp.count;
        m.near += comp.near;
        m.first = m.first.min(comp.first);
    }
    let mut kept: Vec<(u64, u32)> = merged
        .iter()
        .enumerate()
        .filter_map(|(r, m)| {
            m.filter(|m| !is_removed(m.count, m.near, cfg.filter_threshold))
                .map(|m| (m.first, r as u32))
        })
        .collect();
    kept.sort_unstable();
    let mut root_label = vec![0u32; total];
    for (n, &(_, r)) in kept.iter().enumerate() {
        root_label[r as usize] = n as u32 + 1;
    }
    let final_label: Vec<u32> = root.iter().map(|&r| root_label[r as usize]).collect();
    log::debug!(
        "decode: {} cells, {} core pieces, {} instances",
        cells.len(),
        total,
        kept.len()
    );

    let writer = BlockStoreWriter::create::<u32>(out_root, label_meta, chunk)?;
    let halo = cfg.decode_reach();
    cells.par_iter().try_for_each(|&c| -> Result<()> {
        let cell = store.chunk_bounds(c);
        let win = cell.expand(halo, shape);
        let ws = win.shape();
        let sem: SemanticVolume = store.read_region(win)?;
        let ids: LabelVolume = scratch.read_region(win)?;
        let mut labels: Vec<u32> = ids
            .data()
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if l == 0 {
                    return 0;
                }
                let q = coords_of(ws, i);
                let g = [0, 1, 2].map(|a| q[a] + win.lo[a]);
                final_label[gid(cell_of(g, chunk), l) as usize]
            })
            .collect();
        grow_cores(sem.data(), &mut labels, ws, halo);
        let grown = ids.with_data(labels);
        let local = Bounds::new(
            [0, 1, 2].map(|a| cell.lo[a] - win.lo[a]),
            [0, 1, 2].map(|a| cell.hi[a] - win.lo[a]),
        );
        writer.write_chunk(c, grown.crop_unchecked(local).data())
    })?;
    drop(scratch);
    std::fs::remove_dir_all(&scratch_root).map_err(|e| Error::io(&scratch_root, e))?;
    writer.finish()
}
