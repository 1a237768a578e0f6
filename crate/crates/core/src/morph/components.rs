use super::{for_each_neighbor, Connectivity};
use crate::volume::{coords_of, LabelVolume, Mask, Shape};

/// Disjoint sets over dense `u32` ids; the smaller id always becomes the root.
#[derive(Debug, Clone, Default)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Offsets that precede a voxel in raster order.
fn backward_offsets(conn: Connectivity) -> Vec<[i32; 3]> {
    conn.offsets()
        .iter()
        .copied()
        .filter(|o| o[2] < 0 || (o[2] == 0 && (o[1] < 0 || (o[1] == 0 && o[0] < 0))))
        .collect()
}

/// Two-pass union-find labelling. Components are numbered 1.. in raster order
/// of their first voxel. Returns the label buffer and the component count.
pub(crate) fn label_components(shape: Shape, fg: &[bool], conn: Connectivity) -> (Vec<u32>, u32) {
    let back = backward_offsets(conn);
    let mut uf = UnionFind::new(fg.len());
    for i in 0..fg.len() {
        if !fg[i] {
            continue;
        }
        let p = coords_of(shape, i);
        for_each_neighbor(shape, p, &back, |j, _| {
            if fg[j] {
                uf.union(i as u32, j as u32);
            }
        });
    }
    let mut root_label = vec![0u32; fg.len()];
    let mut labels = vec![0u32; fg.len()];
    let mut next = 0u32;
    for i in 0..fg.len() {
        if !fg[i] {
            continue;
        }
        let r = uf.find(i as u32) as usize;
        if root_label[r] == 0 {
            next += 1;
            root_label[r] = next;
        }
        labels[i] = root_label[r];
    }
    (labels, next)
}

/// Maximal connected sets of `mask` get distinct labels, numbered in raster
/// order of each component's first voxel.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> LabelVolume {
    let (labels, _) = label_components(mask.shape(), mask.data(), connectivity);
    mask.with_data(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{linear_index, Volume};
    use proptest::prelude::*;
    use std::collections::VecDeque;

    /// Breadth-first flood fill, labelling in raster order of the seed voxel.
    fn flood_fill(mask: &Mask, conn: Connectivity) -> (Vec<u32>, u32) {
        let s = mask.shape();
        let mut out = vec![0u32; mask.len()];
        let mut n = 0;
        for i in 0..mask.len() {
            if !mask.data()[i] || out[i] != 0 {
                continue;
            }
            n += 1;
            out[i] = n;
            let mut q = VecDeque::from([i]);
            while let Some(j) = q.pop_front() {
                let p = coords_of(s, j);
                for o in conn.offsets() {
                    let c = [p[0] as i64 + o[0] as i64, p[1] as i64 + o[1] as i64, p[2] as i64 + o[2] as i64];
                    if (0..3).any(|a| c[a] < 0 || c[a] >= s[a] as i64) {
                        continue;
                    }
                    let k = linear_index(s, [c[0] as usize, c[1] as usize, c[2] as usize]);
                    if mask.data()[k] && out[k] == 0 {
                        out[k] = n;
                        q.push_back(k);
                    }
                }
            }
        }
        (out, n)
    }

    #[test]
    fn diagonal_voxels() {
        let mut m = Volume::filled([3, 3, 3], false);
        m.set([0, 0, 0], true);
        m.set([1, 1, 1], true);
        assert_eq!(connected_components(&m, Connectivity::Six).max_label(), 2);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).max_label(), 1);
    }

    #[test]
    fn empty_mask_has_no_labels() {
        let m = Volume::filled([4, 4, 4], false);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).max_label(), 0);
    }

    #[test]
    fn labels_follow_raster_order() {
        let mut m = Volume::filled([6, 1, 1], false);
        m.set([4, 0, 0], true);
        m.set([1, 0, 0], true);
        let l = connected_components(&m, Connectivity::Six);
        assert_eq!(l.get([1, 0, 0]), 1);
        assert_eq!(l.get([4, 0, 0]), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn agrees_with_flood_fill(
            seed in any::<u64>(),
            density in 0.2f64..0.6,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Volume::from_fn([16, 16, 16], |_| rng.random_bool(density));
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let (fast, n) = label_components(m.shape(), m.data(), conn);
                let (oracle, n2) = flood_fill(&m, conn);
                prop_assert_eq!(n, n2);
                prop_assert_eq!(&fast, &oracle);
            }
        }
    }
}
