//! Instance labels ⇄ border-core semantic maps.
//!
//! Encoding erodes every instance by a fixed ball; the eroded part is its
//! core and the rest its border. Decoding labels connected cores and grows
//! them back over the border by a bounded geodesic dilation.

mod streaming;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::morph::{for_each_neighbor, label_components, Connectivity};
use crate::morph::{boundary_voxels, squared_edt, squared_edt_with_edges};
use crate::volume::{class, coords_of, Bounds, LabelVolume, SemanticVolume, Shape};
use crate::{Error, Result};

pub use streaming::decode_streaming;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorderCoreConfig {
    pub border_thickness_vox: u32,
    pub filter_min_distance: f64,
    pub filter_threshold: f64,
}

impl Default for BorderCoreConfig {
    fn default() -> Self {
        BorderCoreConfig {
            border_thickness_vox: 3,
            filter_min_distance: 1.0,
            filter_threshold: 0.95,
        }
    }
}

impl BorderCoreConfig {
    pub fn with_thickness(border_thickness_vox: u32) -> Self {
        BorderCoreConfig {
            border_thickness_vox,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.border_thickness_vox == 0 {
            return Err(Error::Argument("border thickness must be at least 1 voxel".into()));
        }
        if !(self.filter_min_distance >= 0.0 && self.filter_min_distance.is_finite()) {
            return Err(Error::Argument(format!(
                "filter minimum distance must be a non-negative number, got {}",
                self.filter_min_distance
            )));
        }
        if !(0.0..=1.0).contains(&self.filter_threshold) {
            return Err(Error::Argument(format!(
                "filter threshold must lie in [0, 1], got {}",
                self.filter_threshold
            )));
        }
        Ok(())
    }

    /// How far, in voxels, decoding grows a core. Border voxels of an encoded
    /// instance lie within `t * sqrt(3)` of its core even at a cube corner, so
    /// `2t + 2` leaves room for the chamfer metric's overestimate.
    pub fn decode_reach(&self) -> usize {
        2 * self.border_thickness_vox as usize + 2
    }

    fn filter_halo(&self) -> usize {
        if self.filter_min_distance > 0.0 {
            self.filter_min_distance.ceil() as usize + 1
        } else {
            0
        }
    }
}

/// Per-instance ball erosion: eroded voxels become core, the remainder border.
/// Voxels outside the volume count as background.
pub fn encode(instances: &LabelVolume, cfg: &BorderCoreConfig) -> SemanticVolume {
    let shape = instances.shape();
    let mut boxes: BTreeMap<u32, Bounds> = BTreeMap::new();
    for (i, &l) in instances.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let p = coords_of(shape, i);
        let b = boxes.entry(l).or_insert(Bounds::new(p, p));
        for a in 0..3 {
            b.lo[a] = b.lo[a].min(p[a]);
            b.hi[a] = b.hi[a].max(p[a] + 1);
        }
    }
    let t2 = f64::from(cfg.border_thickness_vox).powi(2);
    let cores: Vec<Vec<usize>> = boxes
        .par_iter()
        .map(|(&id, b)| {
            let w = b.expand(1, shape);
            let crop = instances.crop_unchecked(w);
            let outside: Vec<bool> = crop.data().iter().map(|&l| l != id).collect();
            let d2 = squared_edt_with_edges(w.shape(), &outside);
            let ws = w.shape();
            (0..outside.len())
                .filter(|&i| !outside[i] && d2[i] > t2)
                .map(|i| {
                    let q = coords_of(ws, i);
                    (q[0] + w.lo[0]) + shape[0] * ((q[1] + w.lo[1]) + shape[1] * (q[2] + w.lo[2]))
                })
                .collect()
        })
        .collect();
    let mut out = instances.map(|l| if l == 0 { class::BACKGROUND } else { class::BORDER });
    for list in cores {
        for i in list {
            out.data_mut()[i] = class::CORE;
        }
    }
    out
}

/// Core voxels closer than `min_distance` to the nearest core-surface voxel
/// (a core voxel with a non-core face neighbour). Surface voxels are at 0.
pub(crate) fn near_surface(shape: Shape, core: &[bool], min_distance: f64) -> Vec<bool> {
    if !(min_distance > 0.0) {
        return vec![false; core.len()];
    }
    let surface = boundary_voxels(shape, core);
    let d2 = squared_edt(shape, &surface);
    let m2 = min_distance * min_distance;
    core.iter().zip(&d2).map(|(&c, &d)| c && d < m2).collect()
}

#[inline]
pub(crate) fn is_removed(count: u64, near: u64, threshold: f64) -> bool {
    count > 0 && near as f64 / count as f64 > threshold
}

/// Turns every 26-connected core whose near-surface fraction exceeds the
/// threshold into border.
pub fn small_core_filter(sem: &SemanticVolume, cfg: &BorderCoreConfig) -> SemanticVolume {
    let mut out = sem.clone();
    let removed = filtered_components(sem, cfg);
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if removed.1[i] != 0 && removed.0[removed.1[i] as usize - 1] {
            *v = class::BORDER;
        }
    }
    out
}

/// Core components (raster-numbered) and which of them the filter removes.
fn filtered_components(sem: &SemanticVolume, cfg: &BorderCoreConfig) -> (Vec<bool>, Vec<u32>) {
    let shape = sem.shape();
    let core: Vec<bool> = sem.data().iter().map(|&c| c == class::CORE).collect();
    let (ids, n) = label_components(shape, &core, Connectivity::TwentySix);
    let near = near_surface(shape, &core, cfg.filter_min_distance);
    let mut count = vec![0u64; n as usize];
    let mut small = vec![0u64; n as usize];
    for (i, &l) in ids.iter().enumerate() {
        if l != 0 {
            count[l as usize - 1] += 1;
            small[l as usize - 1] += u64::from(near[i]);
        }
    }
    let removed = (0..n as usize)
        .map(|k| is_removed(count[k], small[k], cfg.filter_threshold))
        .collect();
    (removed, ids)
}

/// Chamfer weights of a face, edge and corner step.
const STEP_WEIGHT: [u32; 4] = [0, 3, 4, 5];

/// Grows labelled cores over the rest of the foreground. Every voxel takes
/// the label of the core nearest by chamfer distance through non-background
/// voxels, ties to the smaller label, and stays 0 beyond `reach` voxels.
///
/// A path within reach takes at most `reach` steps, so the result for any
/// voxel depends only on the cube of that radius around it: a window with a
/// halo of `reach` reproduces the whole-volume result on its interior.
pub(crate) fn grow_cores(sem: &[u8], labels: &mut [u32], window: Shape, reach: usize) {
    let bound = 3 * reach as u32;
    let mut dist: Vec<u32> = labels.iter().map(|&l| if l != 0 { 0 } else { u32::MAX }).collect();
    let mut heap: BinaryHeap<Reverse<(u32, u32, usize)>> = labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l != 0)
        .map(|(i, &l)| Reverse((0, l, i)))
        .collect();
    while let Some(Reverse((d, l, i))) = heap.pop() {
        if d != dist[i] || l != labels[i] {
            continue;
        }
        let p = coords_of(window, i);
        for_each_neighbor(window, p, Connectivity::TwentySix.offsets(), |j, q| {
            if sem[j] == class::BACKGROUND {
                return;
            }
            let steps = (0..3).filter(|&a| p[a] != q[a]).count();
            let nd = d + STEP_WEIGHT[steps];
            if nd <= bound && (nd, l) < (dist[j], labels[j]) {
                dist[j] = nd;
                labels[j] = l;
                heap.push(Reverse((nd, l, j)));
            }
        });
    }
}

/// Filter, label cores, grow them over the border. Instances are numbered in
/// raster order of their first core voxel; border that no core reaches within
/// [`BorderCoreConfig::decode_reach`] is dropped to background.
pub fn decode(sem: &SemanticVolume, cfg: &BorderCoreConfig) -> LabelVolume {
    let shape = sem.shape();
    let (removed, ids) = filtered_components(sem, cfg);
    let mut relabel = vec![0u32; removed.len() + 1];
    let mut next = 0;
    for (k, &r) in removed.iter().enumerate() {
        if !r {
            next += 1;
            relabel[k + 1] = next;
        }
    }
    let mut labels: Vec<u32> = ids.iter().map(|&l| relabel[l as usize]).collect();
    grow_cores(sem.data(), &mut labels, shape, cfg.decode_reach());
    sem.with_data(labels)
}
