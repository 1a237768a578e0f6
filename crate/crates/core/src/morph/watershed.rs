//! Seeded priority-flood watershed.
//!
//! Voxels leave the queue in ascending `(priority, key)` order, where the key
//! is the voxel's raster index in the full volume. A popped voxel hands its
//! label to every unlabelled domain neighbour. Because the order depends only
//! on priority and position, results are identical across runs and thread
//! counts, and a window cut out of a larger volume floods the same way as the
//! whole when given global keys.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{for_each_neighbor, Connectivity};
use crate::volume::{coords_of, LabelVolume, Mask, Shape, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Item {
    priority: f32,
    key: u64,
    idx: usize,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// Floods `labels` (seeds in, basins out) over `domain`.
pub(crate) fn flood(
    shape: Shape,
    priority: &[f32],
    labels: &mut [u32],
    domain: &[bool],
    connectivity: Connectivity,
    key: impl Fn(usize) -> u64,
) {
    let offsets = connectivity.offsets();
    // +0.0 folds -0.0 into 0.0 so that negated distances tie properly
    let prio = |i: usize| priority[i] + 0.0;
    let mut heap: BinaryHeap<Item> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0)
        .map(|(i, _)| Item {
            priority: prio(i),
            key: key(i),
            idx: i,
        })
        .collect();
    while let Some(Item { idx, .. }) = heap.pop() {
        let label = labels[idx];
        for_each_neighbor(shape, coords_of(shape, idx), offsets, |j, _| {
            if domain[j] && labels[j] == 0 {
                labels[j] = label;
                heap.push(Item {
                    priority: prio(j),
                    key: key(j),
                    idx: j,
                });
            }
        });
    }
}

/// Assigns every domain voxel reachable from a seed to exactly one seed label,
/// flooding in ascending priority. Unreachable domain voxels stay 0.
pub fn seeded_watershed(
    priority: &Volume<f32>,
    seeds: &LabelVolume,
    domain: &Mask,
    connectivity: Connectivity,
) -> Result<LabelVolume> {
    let shape = seeds.shape();
    if priority.shape() != shape || domain.shape() != shape {
        return Err(Error::Argument(format!(
            "watershed inputs disagree in shape: priority {:?}, seeds {shape:?}, domain {:?}",
            priority.shape(),
            domain.shape()
        )));
    }
    let mut any = false;
    for (i, &l) in seeds.data().iter().enumerate() {
        if l != 0 {
            any = true;
            if !domain.data()[i] {
                return Err(Error::Argument(format!(
                    "seed {l} at {:?} lies outside the domain",
                    coords_of(shape, i)
                )));
            }
        }
        if domain.data()[i] && !priority.data()[i].is_finite() {
            return Err(Error::Argument(format!(
                "priority is not finite at {:?}",
                coords_of(shape, i)
            )));
        }
    }
    if !any {
        return Err(Error::Argument("watershed needs at least one seed".into()));
    }
    let mut labels = seeds.data().to_vec();
    flood(
        shape,
        priority.data(),
        &mut labels,
        domain.data(),
        connectivity,
        |i| i as u64,
    );
    Ok(seeds.with_data(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor(len: usize) -> (Mask, Volume<f32>) {
        let domain = Volume::filled([len, 1, 1], true);
        let prio = Volume::from_fn([len, 1, 1], |p| p[0].min(len - 1 - p[0]) as f32);
        (domain, prio)
    }

    #[test]
    fn single_seed_fills_reachable_domain() {
        let domain = Volume::from_fn([6, 6, 6], |p| p[0] != 3 || p[1] == 0);
        let prio = Volume::filled([6, 6, 6], 0.0f32);
        let mut seeds = Volume::filled([6, 6, 6], 0u32);
        seeds.set([0, 0, 0], 9);
        let out = seeded_watershed(&prio, &seeds, &domain, Connectivity::Six).unwrap();
        for i in 0..out.len() {
            assert_eq!(out.data()[i], if domain.data()[i] { 9 } else { 0 });
        }
    }

    #[test]
    fn symmetric_corridor_splits_at_midpoint() {
        for len in [10usize, 11, 20, 31] {
            let (domain, prio) = corridor(len);
            let mut seeds = Volume::filled([len, 1, 1], 0u32);
            seeds.set([0, 0, 0], 1);
            seeds.set([len - 1, 0, 0], 2);
            let out = seeded_watershed(&prio, &seeds, &domain, Connectivity::TwentySix).unwrap();
            let a = out.data().iter().filter(|&&l| l == 1).count();
            let b = out.data().iter().filter(|&&l| l == 2).count();
            assert_eq!(a + b, len);
            assert!(a.abs_diff(b) <= 1, "len {len}: {a} vs {b}");
            // basins are contiguous
            let first_two = out.data().iter().position(|&l| l == 2).unwrap();
            assert!(out.data()[first_two..].iter().all(|&l| l == 2));
        }
    }

    #[test]
    fn label_permutation_equivariance() {
        let domain = Volume::from_fn([9, 7, 5], |p| (p[0] + p[1]) % 5 != 0 || p[2] == 2);
        let prio = Volume::from_fn([9, 7, 5], |p| ((p[0] * 7 + p[1] * 3 + p[2]) % 4) as f32);
        let mut seeds = Volume::filled([9, 7, 5], 0u32);
        let spots = [[1, 1, 1], [7, 5, 3], [4, 3, 2]];
        for (k, s) in spots.iter().enumerate() {
            if domain.get(*s) {
                seeds.set(*s, k as u32 + 1);
            }
        }
        let perm = [0u32, 3, 1, 2];
        let a = seeded_watershed(&prio, &seeds, &domain, Connectivity::TwentySix).unwrap();
        let b = seeded_watershed(&prio, &seeds.map(|l| perm[l as usize]), &domain, Connectivity::TwentySix)
            .unwrap();
        assert_eq!(a.map(|l| perm[l as usize]), b);
    }

    #[test]
    fn errors() {
        let (domain, prio) = corridor(5);
        let seeds = Volume::filled([5, 1, 1], 0u32);
        assert!(matches!(
            seeded_watershed(&prio, &seeds, &domain, Connectivity::Six),
            Err(Error::Argument(_))
        ));
        let mut outside = Volume::filled([5, 1, 1], false);
        outside.set([1, 0, 0], true);
        let mut s = seeds.clone();
        s.set([0, 0, 0], 1);
        assert!(seeded_watershed(&prio, &s, &outside, Connectivity::Six).is_err());
    }

    #[test]
    fn coverage_equals_reachable_domain() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let domain = Volume::from_fn([10, 10, 10], |_| rng.random_bool(0.6));
            let prio = Volume::from_fn([10, 10, 10], |_| rng.random_range(0.0f32..5.0));
            let mut seeds = Volume::filled([10, 10, 10], 0u32);
            let mut n = 0;
            for i in 0..domain.len() {
                if domain.data()[i] && rng.random_bool(0.01) {
                    n += 1;
                    seeds.data_mut()[i] = n;
                }
            }
            if n == 0 {
                continue;
            }
            let out = seeded_watershed(&prio, &seeds, &domain, Connectivity::TwentySix).unwrap();
            // reachable = union of seed-containing components of the domain
            let comps = crate::morph::connected_components(&domain, Connectivity::TwentySix);
            let mut seeded = std::collections::HashSet::new();
            for i in 0..domain.len() {
                if seeds.data()[i] != 0 {
                    seeded.insert(comps.data()[i]);
                }
            }
            for i in 0..domain.len() {
                let reachable = domain.data()[i] && seeded.contains(&comps.data()[i]);
                assert_eq!(out.data()[i] != 0, reachable);
            }
        }
    }
}
