//! Geodesic distance inside a mask: Dijkstra over the 26-neighbourhood with
//! edge weights equal to the Euclidean step length (1, √2, √3).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Connectivity, DistanceMap, Metric};
use crate::volume::{coords_of, linear_index, Mask};
use crate::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Shortest in-mask path length from `seeds` to every voxel; infinite outside
/// the domain or where no path exists.
pub fn geodesic_distance(domain: &Mask, seeds: &[[usize; 3]]) -> Result<DistanceMap> {
    if seeds.is_empty() {
        return Err(Error::Argument("geodesic distance needs at least one seed".into()));
    }
    let shape = domain.shape();
    let mut dist = vec![f64::INFINITY; domain.len()];
    let mut heap = BinaryHeap::new();
    for &s in seeds {
        if (0..3).any(|a| s[a] >= shape[a]) || !domain.get(s) {
            return Err(Error::Argument(format!("seed {s:?} lies outside the domain")));
        }
        let i = linear_index(shape, s);
        dist[i] = 0.0;
        heap.push(Entry(0.0, i));
    }
    let steps: Vec<([i64; 3], f64)> = Connectivity::TwentySix
        .offsets()
        .iter()
        .map(|o| {
            let len = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt();
            ([o[0] as i64, o[1] as i64, o[2] as i64], len)
        })
        .collect();
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let p = coords_of(shape, i);
        for (o, len) in &steps {
            let q = [p[0] as i64 + o[0], p[1] as i64 + o[1], p[2] as i64 + o[2]];
            if (0..3).any(|a| q[a] < 0 || q[a] >= shape[a] as i64) {
                continue;
            }
            let j = linear_index(shape, [q[0] as usize, q[1] as usize, q[2] as usize]);
            if domain.data()[j] {
                let nd = d + len;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
    }
    let out: Vec<f32> = dist.into_iter().map(|d| d as f32).collect();
    Ok(DistanceMap::new(Metric::Geodesic, domain.with_data(out)))
}
