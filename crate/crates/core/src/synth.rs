//! Synthetic particle phantoms with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume::{coords_of, LabelVolume, ScalarVolume, Shape, Volume, VolumeMeta};
use crate::{DType, Error, Result};

/// Placement attempts per particle before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Ellipsoid,
    Superellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub shape: Shape,
    pub particle_count: usize,
    pub radius_range_vox: (f64, f64),
    pub shape_kinds: Vec<ShapeKind>,
    pub touching_pair_fraction: f64,
    /// (mean, standard deviation)
    pub intensity_fg: (f64, f64),
    pub intensity_bg: (f64, f64),
    pub streak_artifact_count: usize,
    pub rng_seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            shape: [64, 64, 64],
            particle_count: 10,
            radius_range_vox: (5.0, 8.0),
            shape_kinds: vec![ShapeKind::Sphere],
            touching_pair_fraction: 0.0,
            intensity_fg: (1000.0, 50.0),
            intensity_bg: (200.0, 50.0),
            streak_artifact_count: 0,
            rng_seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.radius_range_vox;
        let min_axis = *self.shape.iter().min().unwrap() as f64;
        if self.shape.contains(&0) {
            return Err(Error::Argument(format!("phantom shape {:?} has an empty axis", self.shape)));
        }
        if !(lo >= 2.0 && lo <= hi && hi < min_axis / 2.0) {
            return Err(Error::Argument(format!(
                "radius range ({lo}, {hi}) must satisfy 2 <= min <= max < {}",
                min_axis / 2.0
            )));
        }
        if self.shape_kinds.is_empty() {
            return Err(Error::Argument("at least one shape kind is required".into()));
        }
        if !(0.0..=1.0).contains(&self.touching_pair_fraction) {
            return Err(Error::Argument(format!(
                "touching pair fraction {} is outside [0, 1]",
                self.touching_pair_fraction
            )));
        }
        for (name, (_, sd)) in [("foreground", self.intensity_fg), ("background", self.intensity_bg)] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::Argument(format!("{name} intensity std {sd} is invalid")));
            }
        }
        Ok(())
    }

    /// Number of touching pairs among `particle_count` particles.
    pub fn touching_pairs(&self) -> usize {
        (self.touching_pair_fraction * self.particle_count as f64 / 2.0).floor() as usize
    }
}

/// One solid `|x/a|^e + |y/b|^e + |z/c|^e <= 1` in a rotated frame.
#[derive(Debug, Clone)]
pub(crate) struct Solid {
    semi_axes: [f64; 3],
    exponent: f64,
    /// rows are the body axes in volume coordinates
    rotation: [[f64; 3]; 3],
}

impl Solid {
    pub(crate) fn sample(rng: &mut ChaCha8Rng, kinds: &[ShapeKind], radii: (f64, f64)) -> Solid {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let mut r = || rng.random_range(radii.0..=radii.1);
        let (semi_axes, exponent) = match kind {
            ShapeKind::Sphere => {
                let a = r();
                ([a; 3], 2.0)
            }
            ShapeKind::Ellipsoid => ([r(), r(), r()], 2.0),
            ShapeKind::Superellipsoid => {
                let axes = [r(), r(), r()];
                (axes, rng.random_range(2.0..=4.0))
            }
        };
        let rotation = if kind == ShapeKind::Sphere {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        } else {
            random_rotation(rng)
        };
        Solid {
            semi_axes,
            exponent,
            rotation,
        }
    }

    #[cfg(test)]
    pub(crate) fn sphere(radius: f64) -> Solid {
        Solid {
            semi_axes: [radius; 3],
            exponent: 2.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Radius of a ball around the centre that contains the solid.
    fn extent(&self) -> f64 {
        if self.exponent == 2.0 {
            self.semi_axes.iter().cloned().fold(0.0, f64::max)
        } else {
            self.semi_axes.iter().map(|a| a * a).sum::<f64>().sqrt()
        }
    }

    fn contains(&self, d: [f64; 3]) -> bool {
        let mut s = 0.0;
        for k in 0..3 {
            let u = self.rotation[k][0] * d[0] + self.rotation[k][1] * d[1] + self.rotation[k][2] * d[2];
            s += (u / self.semi_axes[k]).abs().powf(self.exponent);
        }
        s <= 1.0
    }

    /// Voxel offsets from an integer anchor for a centre at `anchor + frac`.
    pub(crate) fn voxels(&self, frac: [f64; 3]) -> Vec<[i64; 3]> {
        let h = self.extent().ceil() as i64 + 1;
        let mut out = Vec::new();
        for z in -h..=h {
            for y in -h..=h {
                for x in -h..=h {
                    let d = [x as f64 - frac[0], y as f64 - frac[1], z as f64 - frac[2]];
                    if self.contains(d) {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // uniform unit quaternion
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Uniformly random unit vector.
pub(crate) fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0; 3].map(|_| StandardNormal.sample(rng));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|c| c / n);
        }
    }
}

/// Face-connected voxel walk along the ray `start + s * dir`, `s >= 0`,
/// beginning at the voxel containing `start`.
pub(crate) fn ray_voxels(start: [f64; 3], dir: [f64; 3], max_steps: usize) -> Vec<[i64; 3]> {
    let mut v = start.map(|c| c.round() as i64);
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut step = [0i64; 3];
    for a in 0..3 {
        if dir[a] > 0.0 {
            step[a] = 1;
            t_delta[a] = 1.0 / dir[a];
            t_max[a] = (v[a] as f64 + 0.5 - start[a]) / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_delta[a] = -1.0 / dir[a];
            t_max[a] = (start[a] - (v[a] as f64 - 0.5)) / -dir[a];
        }
    }
    let mut out = Vec::with_capacity(max_steps + 1);
    out.push(v);
    for _ in 0..max_steps {
        let a = (0..3)
            .min_by(|&i, &j| t_max[i].total_cmp(&t_max[j]))
            .unwrap();
        v[a] += step[a];
        t_max[a] += t_delta[a];
        out.push(v);
    }
    out
}

/// Slides the body `offsets` from `start` along `dir` and returns the first
/// anchor at which it no longer overlaps `blocked`. Consecutive anchors are
/// face neighbours, so the body there touches `blocked` across a face.
pub(crate) fn slide_to_contact(
    offsets: &[[i64; 3]],
    start: [f64; 3],
    dir: [f64; 3],
    max_steps: usize,
    blocked: impl Fn([i64; 3]) -> bool,
) -> Option<[i64; 3]> {
    let path = ray_voxels(start, dir, max_steps);
    let overlaps = |a: [i64; 3]| {
        offsets
            .iter()
            .any(|o| blocked([a[0] + o[0], a[1] + o[1], a[2] + o[2]]))
    };
    if !overlaps(path[0]) {
        return None;
    }
    path.into_iter().skip(1).find(|&a| !overlaps(a))
}

fn in_volume(shape: Shape, p: [i64; 3]) -> bool {
    (0..3).all(|a| p[a] >= 0 && p[a] < shape[a] as i64)
}

fn index(shape: Shape, p: [i64; 3]) -> usize {
    p[0] as usize + shape[0] * (p[1] as usize + shape[1] * p[2] as usize)
}

struct Placer<'a> {
    spec: &'a PhantomSpec,
    labels: Vec<u32>,
    centroids: Vec<[f64; 3]>,
}

impl Placer<'_> {
    /// Inside the volume and at least 2 voxels from every instance except `partner`.
    fn fits(&self, voxels: &[[i64; 3]], partner: u32) -> bool {
        let s = self.spec.shape;
        voxels.iter().all(|&p| {
            if !in_volume(s, p) {
                return false;
            }
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                        if in_volume(s, q) {
                            let l = self.labels[index(s, q)];
                            if l != 0 && l != partner {
                                return false;
                            }
                        }
                    }
                }
            }
            true
        })
    }

    fn stamp(&mut self, voxels: &[[i64; 3]]) -> u32 {
        let id = self.centroids.len() as u32 + 1;
        let mut c = [0.0; 3];
        for &p in voxels {
            let i = index(self.spec.shape, p);
            self.labels[i] = id;
            for a in 0..3 {
                c[a] += p[a] as f64;
            }
        }
        self.centroids.push(c.map(|v| v / voxels.len() as f64));
        id
    }

    fn unstamp(&mut self, voxels: &[[i64; 3]]) {
        for &p in voxels {
            let i = index(self.spec.shape, p);
            self.labels[i] = 0;
        }
        self.centroids.pop();
    }

    fn isolated(&self, rng: &mut ChaCha8Rng) -> Option<Vec<[i64; 3]>> {
        let solid = Solid::sample(rng, &self.spec.shape_kinds, self.spec.radius_range_vox);
        let e = solid.extent();
        let mut centre = [0.0; 3];
        for (a, c) in centre.iter_mut().enumerate() {
            let hi = self.spec.shape[a] as f64 - 1.0 - e;
            *c = if hi > e { rng.random_range(e..hi) } else { (self.spec.shape[a] as f64 - 1.0) / 2.0 };
        }
        let anchor = centre.map(|c| c.floor() as i64);
        let frac = [0, 1, 2].map(|a| centre[a] - anchor[a] as f64);
        let voxels: Vec<[i64; 3]> = solid
            .voxels(frac)
            .into_iter()
            .map(|o| [anchor[0] + o[0], anchor[1] + o[1], anchor[2] + o[2]])
            .collect();
        (!voxels.is_empty() && self.fits(&voxels, 0)).then_some(voxels)
    }

    fn partner(&self, rng: &mut ChaCha8Rng, of: u32) -> Option<Vec<[i64; 3]>> {
        let solid = Solid::sample(rng, &self.spec.shape_kinds, self.spec.radius_range_vox);
        let offsets = solid.voxels([0.0; 3]);
        let dir = random_direction(rng);
        let s = self.spec.shape;
        let steps = s.iter().sum::<usize>();
        let labels = &self.labels;
        let anchor = slide_to_contact(&offsets, self.centroids[of as usize - 1], dir, steps, |p| {
            in_volume(s, p) && labels[index(s, p)] == of
        })?;
        let voxels: Vec<[i64; 3]> = offsets
            .iter()
            .map(|o| [anchor[0] + o[0], anchor[1] + o[1], anchor[2] + o[2]])
            .collect();
        self.fits(&voxels, of).then_some(voxels)
    }
}

fn capacity_error(spec: &PhantomSpec, placed: usize) -> Error {
    Error::Capacity(format!(
        "placed only {placed} of {} particles in {:?} after {MAX_PLACEMENT_ATTEMPTS} attempts; \
         request fewer or smaller particles",
        spec.particle_count, spec.shape
    ))
}

/// Ground-truth labels only; [`generate`] adds intensities.
pub fn generate_labels(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    generate_labels_with(spec, &mut rng)
}

fn generate_labels_with(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<LabelVolume> {
    let mut placer = Placer {
        spec,
        labels: vec![0; crate::volume::num_voxels(spec.shape)],
        centroids: Vec::new(),
    };
    let pairs = spec.touching_pairs();
    for _ in 0..pairs {
        let mut done = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let Some(first) = placer.isolated(rng) else { continue };
            let id = placer.stamp(&first);
            if let Some(second) = placer.partner(rng, id) {
                placer.stamp(&second);
                done = true;
                break;
            }
            placer.unstamp(&first);
        }
        if !done {
            return Err(capacity_error(spec, placer.centroids.len()));
        }
    }
    for _ in 2 * pairs..spec.particle_count {
        let voxels = (0..MAX_PLACEMENT_ATTEMPTS)
            .find_map(|_| placer.isolated(rng))
            .ok_or_else(|| capacity_error(spec, placer.centroids.len()))?;
        placer.stamp(&voxels);
    }
    let meta = VolumeMeta::isotropic(spec.shape, DType::U32);
    Volume::new(meta, placer.labels)
}

/// Intensity image and exact labels for `spec`, identical for identical specs.
pub fn generate(spec: &PhantomSpec) -> Result<(ScalarVolume, LabelVolume)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let labels = generate_labels_with(spec, &mut rng)?;
    let (mf, sf) = spec.intensity_fg;
    let (mb, sb) = spec.intensity_bg;
    let fg = Normal::new(mf, sf).map_err(|e| Error::Argument(e.to_string()))?;
    let bg = Normal::new(mb, sb).map_err(|e| Error::Argument(e.to_string()))?;
    // one independent stream per z-slice keeps the output thread-count independent
    let [nx, ny, nz] = spec.shape;
    let slice_seed: u64 = rng.random();
    let mut data = vec![0f32; nx * ny * nz];
    data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, out)| {
        let mut r = ChaCha8Rng::seed_from_u64(slice_seed);
        r.set_stream(z as u64);
        let lab = &labels.data()[z * nx * ny..(z + 1) * nx * ny];
        for (o, &l) in out.iter_mut().zip(lab) {
            let v: f64 = if l != 0 { fg.sample(&mut r) } else { bg.sample(&mut r) };
            *o = v as f32;
        }
    });
    let ids = labels.max_label();
    if ids > 0 && spec.streak_artifact_count > 0 {
        let amplitude = 0.5 * (mf - mb).abs().max(sf.max(sb));
        let centroids = centroids(&labels);
        for _ in 0..spec.streak_artifact_count {
            let c = centroids[rng.random_range(0..centroids.len())];
            let d = random_direction(&mut rng);
            add_streak(&mut data, spec.shape, c, d, amplitude as f32);
        }
    }
    let vol = Volume::new(VolumeMeta::isotropic(spec.shape, DType::F32), data)?;
    Ok((vol, labels))
}

/// Adds `amplitude` to voxels within distance 1 of the line `c + s * d`.
fn add_streak(data: &mut [f32], shape: Shape, c: [f64; 3], d: [f64; 3], amplitude: f32) {
    data.par_iter_mut().enumerate().for_each(|(i, v)| {
        let p = coords_of(shape, i);
        let w = [0, 1, 2].map(|a| p[a] as f64 - c[a]);
        let s = w[0] * d[0] + w[1] * d[1] + w[2] * d[2];
        let r2 = w.iter().map(|x| x * x).sum::<f64>() - s * s;
        if r2 <= 1.0 {
            *v += amplitude;
        }
    });
}

fn centroids(labels: &LabelVolume) -> Vec<[f64; 3]> {
    let n = labels.max_label() as usize;
    let mut sum = vec![[0.0f64; 4]; n];
    for (i, &l) in labels.data().iter().enumerate() {
        if l != 0 {
            let p = labels.coords(i);
            let s = &mut sum[l as usize - 1];
            for a in 0..3 {
                s[a] += p[a] as f64;
            }
            s[3] += 1.0;
        }
    }
    sum.into_iter()
        .filter(|s| s[3] > 0.0)
        .map(|s| [s[0] / s[3], s[1] / s[3], s[2] / s[3]])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeasure {
    pub id: u32,
    pub voxels: u64,
    pub eq_diameter_vox: f64,
    pub bb_lo: [usize; 3],
    /// exclusive
    pub bb_hi: [usize; 3],
}

impl InstanceMeasure {
    /// Equivalent diameter in millimetres for the given voxel spacing
    /// (voxel volume taken as the product of the three spacings).
    pub fn eq_diameter_mm(&self, spacing_mm: [f64; 3]) -> f64 {
        self.eq_diameter_vox * (spacing_mm[0] * spacing_mm[1] * spacing_mm[2]).cbrt()
    }
}

/// Diameter of the ball with `voxels` unit voxels of volume.
pub fn equivalent_diameter(voxels: u64) -> f64 {
    2.0 * (3.0 * voxels as f64 / (4.0 * std::f64::consts::PI)).cbrt()
}

/// Per-instance voxel count, equivalent diameter and bounding box, by id.
pub fn measure(labels: &LabelVolume) -> Vec<InstanceMeasure> {
    let mut table: std::collections::BTreeMap<u32, InstanceMeasure> = Default::default();
    for (i, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let p = labels.coords(i);
        let m = table.entry(l).or_insert(InstanceMeasure {
            id: l,
            voxels: 0,
            eq_diameter_vox: 0.0,
            bb_lo: p,
            bb_hi: p.map(|c| c + 1),
        });
        m.voxels += 1;
        for a in 0..3 {
            m.bb_lo[a] = m.bb_lo[a].min(p[a]);
            m.bb_hi[a] = m.bb_hi[a].max(p[a] + 1);
        }
    }
    table
        .into_values()
        .map(|mut m| {
            m.eq_diameter_vox = equivalent_diameter(m.voxels);
            m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morph::{for_each_neighbor, Connectivity};

    fn spec(count: usize, touching: f64, seed: u64) -> PhantomSpec {
        PhantomSpec {
            shape: [48, 48, 48],
            particle_count: count,
            radius_range_vox: (3.0, 6.0),
            shape_kinds: vec![ShapeKind::Sphere, ShapeKind::Ellipsoid, ShapeKind::Superellipsoid],
            touching_pair_fraction: touching,
            rng_seed: seed,
            ..Default::default()
        }
    }

    /// Smallest squared distance between voxels of different instances, by scan.
    fn min_gap2(l: &LabelVolume) -> i64 {
        let fg: Vec<([i64; 3], u32)> = (0..l.len())
            .filter(|&i| l.data()[i] != 0)
            .map(|i| (l.coords(i).map(|c| c as i64), l.data()[i]))
            .collect();
        let mut best = i64::MAX;
        for (i, (p, a)) in fg.iter().enumerate() {
            for (q, b) in &fg[i + 1..] {
                if a != b {
                    best = best.min((0..3).map(|k| (p[k] - q[k]).pow(2)).sum());
                }
            }
        }
        best
    }

    #[test]
    fn empty_phantom() {
        let (v, l) = generate(&spec(0, 0.0, 1)).unwrap();
        assert_eq!(l.max_label(), 0);
        assert_eq!(v.shape(), [48, 48, 48]);
    }

    #[test]
    fn isolated_particles_keep_clearance() {
        for seed in 0..3 {
            let l = generate_labels(&spec(12, 0.0, seed)).unwrap();
            assert_eq!(l.max_label(), 12);
            assert!(min_gap2(&l) >= 4, "seed {seed}");
        }
    }

    #[test]
    fn touching_pairs_share_a_face() {
        let s = spec(10, 0.6, 4);
        assert_eq!(s.touching_pairs(), 3);
        let l = generate_labels(&s).unwrap();
        assert_eq!(l.max_label(), 10);
        let sh = l.shape();
        let mut touching = std::collections::BTreeSet::new();
        for i in 0..l.len() {
            let a = l.data()[i];
            if a == 0 {
                continue;
            }
            for_each_neighbor(sh, l.coords(i), Connectivity::TwentySix.offsets(), |j, _| {
                let b = l.data()[j];
                if b != 0 && b != a {
                    touching.insert((a.min(b), a.max(b)));
                }
            });
        }
        assert_eq!(touching.into_iter().collect::<Vec<_>>(), vec![(1, 2), (3, 4), (5, 6)]);
        for (a, b) in [(1u32, 2u32), (3, 4), (5, 6)] {
            let face = (0..l.len()).any(|i| {
                l.data()[i] == a && {
                    let mut hit = false;
                    for_each_neighbor(sh, l.coords(i), Connectivity::Six.offsets(), |j, _| hit |= l.data()[j] == b);
                    hit
                }
            });
            assert!(face, "pair ({a}, {b}) is not face adjacent");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut s = spec(8, 0.5, 9);
        s.streak_artifact_count = 2;
        let (v1, l1) = generate(&s).unwrap();
        let (v2, l2) = generate(&s).unwrap();
        assert_eq!(l1, l2);
        let b1: Vec<u32> = v1.data().iter().map(|x| x.to_bits()).collect();
        let b2: Vec<u32> = v2.data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(b1, b2);
        s.rng_seed = 10;
        assert_ne!(generate_labels(&s).unwrap(), l1);
    }

    #[test]
    fn noiseless_intensity_matches_labels() {
        let mut s = spec(6, 0.0, 2);
        s.intensity_fg = (900.0, 0.0);
        s.intensity_bg = (100.0, 0.0);
        let (v, l) = generate(&s).unwrap();
        for (x, id) in v.data().iter().zip(l.data()) {
            assert_eq!(*x, if *id != 0 { 900.0 } else { 100.0 });
        }
    }

    #[test]
    fn streaks_only_brighten() {
        let mut s = spec(4, 0.0, 3);
        s.intensity_fg = (900.0, 0.0);
        s.intensity_bg = (100.0, 0.0);
        s.streak_artifact_count = 3;
        let (v, _) = generate(&s).unwrap();
        assert!(v.data().iter().any(|&x| x > 900.0));
        assert!(v.data().iter().all(|&x| x >= 100.0));
    }

    #[test]
    fn crowded_spec_reports_capacity() {
        let mut s = spec(400, 0.0, 1);
        s.shape = [20, 20, 20];
        s.radius_range_vox = (4.0, 6.0);
        assert!(matches!(generate_labels(&s), Err(Error::Capacity(_))));
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(1, 0.0, 0);
        s.radius_range_vox = (1.0, 3.0);
        assert!(s.validate().is_err());
        s.radius_range_vox = (3.0, 24.0);
        assert!(s.validate().is_err());
        s.radius_range_vox = (3.0, 4.0);
        s.touching_pair_fraction = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn measure_single_voxel_and_sphere() {
        let mut l = Volume::filled([3, 3, 3], 0u32);
        l.set([1, 2, 0], 5);
        let m = measure(&l);
        assert_eq!(m.len(), 1);
        assert!((m[0].eq_diameter_vox - 1.2407009817988).abs() < 1e-12);
        assert_eq!((m[0].bb_lo, m[0].bb_hi), ([1, 2, 0], [2, 3, 1]));

        let s = Solid::sphere(10.0);
        let n = s.voxels([0.0; 3]).len() as u64;
        let d = equivalent_diameter(n);
        assert!((d - 20.0).abs() < 0.03 * 20.0, "{d}");
        assert!(measure(&Volume::filled([4, 4, 4], 0u32)).is_empty());
    }

    #[test]
    fn diameter_monotone_in_count() {
        let mut prev = 0.0;
        for n in 1..2000 {
            let d = equivalent_diameter(n);
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn ray_walk_is_face_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = random_direction(&mut rng);
            let path = ray_voxels([3.2, -1.7, 0.4], d, 40);
            for w in path.windows(2) {
                let step: i64 = (0..3).map(|a| (w[1][a] - w[0][a]).abs()).sum();
                assert_eq!(step, 1);
            }
            let end = path[40];
            let along: f64 = (0..3).map(|a| (end[a] as f64 - [3.2, -1.7, 0.4][a]) * d[a]).sum();
            assert!(along > 20.0);
        }
    }
}
