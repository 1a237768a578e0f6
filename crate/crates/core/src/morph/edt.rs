//! Exact Euclidean distance transform (separable lower-envelope method of
//! Felzenszwalb & Huttenlocher) and the separable L1 transform used for
//! cross-shaped structuring elements.

use serde::{Deserialize, Serialize};

use super::{edge_sq_distance, DistanceMap, Metric};
use crate::volume::{coords_of, num_voxels, Mask, Shape};

/// Target set for [`euclidean_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceTarget {
    /// Set voxels with at least one unset face neighbour inside the volume.
    Boundary,
    /// Unset voxels.
    Complement,
}

/// Distance from every voxel to the nearest target voxel. Voxels that are
/// themselves targets get 0; with no target at all every entry is infinite.
pub fn euclidean_distance(mask: &Mask, to: DistanceTarget) -> DistanceMap {
    let shape = mask.shape();
    let target: Vec<bool> = match to {
        DistanceTarget::Complement => mask.data().iter().map(|&b| !b).collect(),
        DistanceTarget::Boundary => boundary_voxels(shape, mask.data()),
    };
    let d: Vec<f32> = squared_edt(shape, &target)
        .into_iter()
        .map(|d2| d2.sqrt() as f32)
        .collect();
    DistanceMap::new(Metric::Euclidean, mask.with_data(d))
}

pub(crate) fn boundary_voxels(shape: Shape, set: &[bool]) -> Vec<bool> {
    let mut out = vec![false; set.len()];
    for (i, o) in out.iter_mut().enumerate() {
        if !set[i] {
            continue;
        }
        let p = coords_of(shape, i);
        let mut edge = false;
        super::for_each_neighbor(shape, p, super::Connectivity::Six.offsets(), |j, _| {
            edge |= !set[j];
        });
        *o = edge;
    }
    out
}

/// Squared Euclidean distance to the nearest `true` voxel, `f64::INFINITY`
/// when there is none. Values are exact integers.
pub(crate) fn squared_edt(shape: Shape, target: &[bool]) -> Vec<f64> {
    let mut g: Vec<f64> = target
        .iter()
        .map(|&t| if t { 0.0 } else { f64::INFINITY })
        .collect();
    transform_axes(shape, &mut g);
    g
}

/// As [`squared_edt`] but with everything outside the volume counted as target.
pub(crate) fn squared_edt_with_edges(shape: Shape, target: &[bool]) -> Vec<f64> {
    let mut g = squared_edt(shape, target);
    for (i, v) in g.iter_mut().enumerate() {
        let e = edge_sq_distance(shape, coords_of(shape, i));
        if e < *v {
            *v = e;
        }
    }
    g
}

fn transform_axes(shape: Shape, g: &mut [f64]) {
    let n = num_voxels(shape);
    debug_assert_eq!(g.len(), n);
    let longest = shape.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut env = Envelope::with_capacity(longest);
    let strides = [1, shape[0], shape[0] * shape[1]];
    for axis in 0..3 {
        let len = shape[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..shape[o2] {
            for a in 0..shape[o1] {
                let base = a * strides[o1] + b * strides[o2];
                for k in 0..len {
                    line[k] = g[base + k * stride];
                }
                env.transform(&line[..len], &mut out[..len]);
                for k in 0..len {
                    g[base + k * stride] = out[k];
                }
            }
        }
    }
}

struct Envelope {
    sites: Vec<usize>,
    starts: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            sites: Vec::with_capacity(n),
            starts: Vec::with_capacity(n),
        }
    }

    /// `out[q] = min_p f[p] + (q - p)^2` over finite `f[p]`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        self.sites.clear();
        self.starts.clear();
        for q in 0..f.len() {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + (q * q) as f64;
            loop {
                let Some(&p) = self.sites.last() else {
                    self.sites.push(q);
                    self.starts.push(f64::NEG_INFINITY);
                    break;
                };
                let fp = f[p] + (p * p) as f64;
                let s = (fq - fp) / (2.0 * (q as f64 - p as f64));
                if s <= *self.starts.last().unwrap() {
                    self.sites.pop();
                    self.starts.pop();
                    continue;
                }
                self.sites.push(q);
                self.starts.push(s);
                break;
            }
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            while k + 1 < self.sites.len() && self.starts[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.sites[k];
            let d = q as f64 - p as f64;
            *o = f[p] + d * d;
        }
    }
}

/// City-block distance to the nearest `true` voxel (saturating at
/// `u32::MAX / 2`). With `edges` the outside of the volume counts as target.
pub(crate) fn l1_distance(shape: Shape, target: &[bool], edges: bool) -> Vec<u32> {
    const INF: u32 = u32::MAX / 2;
    let mut g: Vec<u32> = target.iter().map(|&t| if t { 0 } else { INF }).collect();
    let strides = [1, shape[0], shape[0] * shape[1]];
    for axis in 0..3 {
        let len = shape[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..shape[o2] {
            for a in 0..shape[o1] {
                let base = a * strides[o1] + b * strides[o2];
                let mut prev = if edges { 0 } else { INF };
                for k in 0..len {
                    let i = base + k * stride;
                    g[i] = g[i].min(prev.saturating_add(1)).min(INF);
                    prev = g[i];
                }
                let mut prev = if edges { 0 } else { INF };
                for k in (0..len).rev() {
                    let i = base + k * stride;
                    g[i] = g[i].min(prev.saturating_add(1)).min(INF);
                    prev = g[i];
                }
            }
        }
    }
    g
}
