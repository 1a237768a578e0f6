//! Binary morphology and the distance/labelling primitives built on it.
//!
//! Out-of-volume voxels count as background for erosion and dilation, so an
//! object touching the volume edge is eroded there as well.

mod components;
mod edt;
mod geodesic;
mod watershed;

use serde::{Deserialize, Serialize};

use crate::volume::{Mask, Shape, Volume};

pub use components::connected_components;
pub(crate) use components::{label_components, UnionFind};
pub use edt::{euclidean_distance, DistanceTarget};
pub(crate) use edt::{boundary_voxels, l1_distance, squared_edt, squared_edt_with_edges};
pub use geodesic::geodesic_distance;
pub use watershed::seeded_watershed;
pub(crate) use watershed::flood;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeKind {
    #[default]
    Ball,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub kind: SeKind,
    pub radius: u32,
}

impl StructuringElement {
    pub fn ball(radius: u32) -> Self {
        StructuringElement {
            kind: SeKind::Ball,
            radius,
        }
    }

    pub fn cross(radius: u32) -> Self {
        StructuringElement {
            kind: SeKind::Cross,
            radius,
        }
    }

    /// Every offset covered by the element, centre included.
    pub fn offsets(&self) -> Vec<[i32; 3]> {
        let r = self.radius as i32;
        let mut out = Vec::new();
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let inside = match self.kind {
                        SeKind::Ball => dx * dx + dy * dy + dz * dz <= r * r,
                        SeKind::Cross => dx.abs() + dy.abs() + dz.abs() <= r,
                    };
                    if inside {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

const FACE_OFFSETS: [[i32; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

static FULL_OFFSETS: std::sync::LazyLock<Vec<[i32; 3]>> = std::sync::LazyLock::new(|| {
    let mut v = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    v.push([dx, dy, dz]);
                }
            }
        }
    }
    v
});

impl Connectivity {
    pub fn offsets(self) -> &'static [[i32; 3]] {
        match self {
            Connectivity::Six => &FACE_OFFSETS,
            Connectivity::TwentySix => &FULL_OFFSETS,
        }
    }

    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }
}

/// Calls `f(j)` for each in-bounds neighbour `j` of voxel `p`.
#[inline]
pub(crate) fn for_each_neighbor(
    shape: Shape,
    p: [usize; 3],
    offsets: &[[i32; 3]],
    mut f: impl FnMut(usize, [usize; 3]),
) {
    for o in offsets {
        let x = p[0] as i64 + o[0] as i64;
        let y = p[1] as i64 + o[1] as i64;
        let z = p[2] as i64 + o[2] as i64;
        if x < 0 || y < 0 || z < 0 {
            continue;
        }
        let q = [x as usize, y as usize, z as usize];
        if q[0] >= shape[0] || q[1] >= shape[1] || q[2] >= shape[2] {
            continue;
        }
        f(q[0] + shape[0] * (q[1] + shape[1] * q[2]), q);
    }
}

/// Which metric a [`DistanceMap`] was computed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Geodesic,
}

/// Non-negative distances, `f32::INFINITY` where no source is reachable.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub metric: Metric,
    distances: Volume<f32>,
}

impl DistanceMap {
    pub(crate) fn new(metric: Metric, distances: Volume<f32>) -> Self {
        DistanceMap { metric, distances }
    }

    pub fn as_volume(&self) -> &Volume<f32> {
        &self.distances
    }

    pub fn into_volume(self) -> Volume<f32> {
        self.distances
    }

    pub fn get(&self, p: [usize; 3]) -> f32 {
        self.distances.get(p)
    }

    pub fn data(&self) -> &[f32] {
        self.distances.data()
    }
}

/// Squared distance from each voxel to the outside of the volume (the nearest
/// out-of-bounds voxel centre).
#[inline]
pub(crate) fn edge_sq_distance(shape: Shape, p: [usize; 3]) -> f64 {
    let mut best = u64::MAX;
    for a in 0..3 {
        let d = (p[a] + 1).min(shape[a] - p[a]) as u64;
        best = best.min(d * d);
    }
    best as f64
}

/// Voxel set iff the element centred there lies inside `mask`.
pub fn erode(mask: &Mask, se: StructuringElement) -> Mask {
    let shape = mask.shape();
    let background: Vec<bool> = mask.data().iter().map(|&b| !b).collect();
    let r = se.radius as f64;
    let out = match se.kind {
        SeKind::Ball => {
            let d2 = squared_edt_with_edges(shape, &background);
            mask.data()
                .iter()
                .zip(&d2)
                .map(|(&m, &d)| m && d > r * r)
                .collect()
        }
        SeKind::Cross => {
            let d = l1_distance(shape, &background, true);
            mask.data()
                .iter()
                .zip(&d)
                .map(|(&m, &d)| m && d as f64 > r)
                .collect()
        }
    };
    mask.with_data(out)
}

/// Union of the element translated to every set voxel.
pub fn dilate(mask: &Mask, se: StructuringElement) -> Mask {
    let shape = mask.shape();
    let r = se.radius as f64;
    let out = match se.kind {
        SeKind::Ball => squared_edt(shape, mask.data())
            .into_iter()
            .map(|d| d <= r * r)
            .collect(),
        SeKind::Cross => l1_distance(shape, mask.data(), false)
            .into_iter()
            .map(|d| d as f64 <= r)
            .collect(),
    };
    mask.with_data(out)
}

pub fn opening(mask: &Mask, se: StructuringElement) -> Mask {
    dilate(&erode(mask, se), se)
}
