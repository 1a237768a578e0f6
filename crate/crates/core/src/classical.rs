//! Threshold + distance-watershed baseline, and marker/border driven
//! splitting of one merged instance.

use serde::{Deserialize, Serialize};

use crate::morph::{
    erode, flood, geodesic_distance, label_components, opening, squared_edt_with_edges,
    Connectivity, StructuringElement,
};
use crate::volume::{linear_index, Bounds, LabelVolume, Mask, ScalarVolume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreshWaterParams {
    pub threshold: f64,
    pub opening_radius: u32,
    pub seed_erosion_radius: u32,
}

impl ThreshWaterParams {
    pub fn new(threshold: f64) -> Self {
        ThreshWaterParams {
            threshold,
            opening_radius: 1,
            seed_erosion_radius: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.opening_radius == 0 || self.seed_erosion_radius == 0 {
            return Err(Error::Argument(format!(
                "opening and seed erosion radii must be at least 1, got {} and {}",
                self.opening_radius, self.seed_erosion_radius
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Argument(format!("threshold {} is not finite", self.threshold)));
        }
        Ok(())
    }
}

/// Threshold, open, seed from the eroded mask, then flood the negated
/// distance to background (volume edge counts as background).
pub fn threshwater(vol: &ScalarVolume, p: &ThreshWaterParams) -> LabelVolume {
    let shape = vol.shape();
    let mask: Mask = vol.map(|v| f64::from(v) >= p.threshold);
    let mask = opening(&mask, StructuringElement::ball(p.opening_radius));
    let seeds = erode(&mask, StructuringElement::ball(p.seed_erosion_radius));
    let (mut labels, _) = label_components(shape, seeds.data(), Connectivity::TwentySix);
    let background: Vec<bool> = mask.data().iter().map(|&m| !m).collect();
    let priority: Vec<f32> = squared_edt_with_edges(shape, &background)
        .into_iter()
        .map(|d2| -(d2.sqrt() as f32))
        .collect();
    flood(shape, &priority, &mut labels, mask.data(), Connectivity::TwentySix, |i| i as u64);
    vol.with_data(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRequest {
    pub target_label: u32,
    pub markers: Vec<[usize; 3]>,
    pub border_voxels: Vec<[usize; 3]>,
}

/// Splits instance `req.target_label` into one fresh instance per marker.
///
/// The instance minus the drawn border is flooded from the markers in order
/// of decreasing geodesic distance to the border (face connectivity, so a
/// one-voxel-thick surface is a closed wall). Border voxels, and any piece
/// no marker reaches, go to the marker with the smallest geodesic distance.
pub fn split_particle(labels: &LabelVolume, req: &SplitRequest) -> Result<LabelVolume> {
    let shape = labels.shape();
    let id = req.target_label;
    if id == 0 {
        return Err(Error::Argument("cannot split the background".into()));
    }
    if req.markers.len() < 2 {
        return Err(Error::Argument(format!(
            "a split needs at least 2 markers, got {}",
            req.markers.len()
        )));
    }
    let inside = |p: [usize; 3]| (0..3).all(|a| p[a] < shape[a]) && labels.get(p) == id;
    for &m in &req.markers {
        if !inside(m) {
            return Err(Error::Argument(format!("marker {m:?} is not inside instance {id}")));
        }
    }
    for &b in &req.border_voxels {
        if !inside(b) {
            return Err(Error::Argument(format!("border voxel {b:?} is not inside instance {id}")));
        }
    }
    if req.border_voxels.is_empty() {
        return Err(Error::Argument("a split needs a non-empty border".into()));
    }

    // work inside the instance's bounding box
    let mut bounds = Bounds::new(req.markers[0], req.markers[0].map(|c| c + 1));
    for (i, &l) in labels.data().iter().enumerate() {
        if l == id {
            let p = labels.coords(i);
            for a in 0..3 {
                bounds.lo[a] = bounds.lo[a].min(p[a]);
                bounds.hi[a] = bounds.hi[a].max(p[a] + 1);
            }
        }
    }
    let bs = bounds.shape();
    let local = |p: [usize; 3]| [0, 1, 2].map(|a| p[a] - bounds.lo[a]);
    let target: Mask = labels.crop_unchecked(bounds).map(|l| l == id);
    let mut border = vec![false; target.len()];
    for &b in &req.border_voxels {
        border[linear_index(bs, local(b))] = true;
    }
    for &m in &req.markers {
        if border[linear_index(bs, local(m))] {
            return Err(Error::Argument(format!("marker {m:?} lies on the border")));
        }
    }
    let domain: Vec<bool> = target.data().iter().zip(&border).map(|(&t, &b)| t && !b).collect();

    let (parts, _) = label_components(bs, &domain, Connectivity::Six);
    for (i, &a) in req.markers.iter().enumerate() {
        for &b in &req.markers[i + 1..] {
            let (pa, pb) = (parts[linear_index(bs, local(a))], parts[linear_index(bs, local(b))]);
            if pa == pb {
                return Err(Error::Validation(format!(
                    "markers {a:?} and {b:?} are connected without crossing the border"
                )));
            }
        }
    }

    let border_points: Vec<[usize; 3]> = req.border_voxels.iter().map(|&b| local(b)).collect();
    let from_border = geodesic_distance(&target, &border_points)?;
    let priority: Vec<f32> = from_border.data().iter().map(|&d| if d.is_finite() { -d } else { 0.0 }).collect();
    let mut basin = vec![0u32; target.len()];
    for (k, &m) in req.markers.iter().enumerate() {
        basin[linear_index(bs, local(m))] = k as u32 + 1;
    }
    flood(bs, &priority, &mut basin, &domain, Connectivity::Six, |i| i as u64);

    let leftovers: Vec<usize> = (0..target.len())
        .filter(|&i| target.data()[i] && basin[i] == 0)
        .collect();
    if !leftovers.is_empty() {
        let from_marker: Vec<Vec<f32>> = req
            .markers
            .iter()
            .map(|&m| geodesic_distance(&target, &[local(m)]).map(|d| d.data().to_vec()))
            .collect::<Result<_>>()?;
        for i in leftovers {
            let p = target.coords(i);
            let euclid = |k: usize| -> f64 {
                let m = local(req.markers[k]);
                (0..3).map(|a| (p[a] as f64 - m[a] as f64).powi(2)).sum()
            };
            let best = (0..req.markers.len())
                .min_by(|&a, &b| {
                    from_marker[a][i]
                        .total_cmp(&from_marker[b][i])
                        .then(euclid(a).total_cmp(&euclid(b)))
                        .then(a.cmp(&b))
                })
                .unwrap();
            basin[i] = best as u32 + 1;
        }
    }

    let first = labels.max_label() + 1;
    let mut out = labels.clone();
    for i in 0..target.len() {
        if target.data()[i] {
            let q = target.coords(i);
            let g = [0, 1, 2].map(|a| q[a] + bounds.lo[a]);
            out.set(g, first + basin[i] - 1);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;
    use proptest::prelude::*;

    fn balls(shape: [usize; 3], centres: &[[f64; 3]], r: f64) -> Volume<bool> {
        Volume::from_fn(shape, |p| {
            centres.iter().any(|c| (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum::<f64>() <= r * r)
        })
    }

    #[test]
    fn noiseless_phantom_threshold_is_exact() {
        // dilating by the element makes the shapes invariant under opening
        let se = StructuringElement::ball(1);
        let fg = crate::morph::dilate(&balls([40, 40, 40], &[[12.0, 12.0, 12.0], [28.0, 26.0, 27.0]], 6.5), se);
        assert_eq!(opening(&fg, se), fg);
        let vol = fg.map(|b| if b { 1000.0f32 } else { 100.0 });
        let l = threshwater(&vol, &ThreshWaterParams::new(550.0));
        assert_eq!(l.max_label(), 2);
        assert!(l.data().iter().zip(fg.data()).all(|(&a, &b)| (a != 0) == b));
    }

    #[test]
    fn touching_spheres_give_two_labels() {
        let fg = balls([44, 30, 30], &[[13.0, 15.0, 15.0], [29.0, 15.0, 15.0]], 8.0);
        let vol = fg.map(|b| if b { 1.0f32 } else { 0.0 });
        let l = threshwater(&vol, &ThreshWaterParams::new(0.5));
        assert_eq!(l.max_label(), 2);
        assert_ne!(l.get([13, 15, 15]), l.get([29, 15, 15]));
    }

    #[test]
    fn background_gives_no_labels() {
        let vol = Volume::filled([10, 10, 10], 0.0f32);
        assert_eq!(threshwater(&vol, &ThreshWaterParams::new(0.5)).max_label(), 0);
    }

    fn opening_sweep(seed: u64, noise: f64) -> Vec<(u32, usize)> {
        use crate::synth::{generate, PhantomSpec};
        let spec = PhantomSpec {
            shape: [48; 3],
            particle_count: 10,
            radius_range_vox: (4.0, 8.0),
            intensity_fg: (0.6, noise),
            intensity_bg: (0.4, noise),
            touching_pair_fraction: 0.3,
            rng_seed: seed,
            ..PhantomSpec::default()
        };
        let (vol, _) = generate(&spec).unwrap();
        (1..=3)
            .map(|r| {
                let mut p = ThreshWaterParams::new(0.5);
                p.opening_radius = r;
                p.seed_erosion_radius = 2;
                let l = threshwater(&vol, &p);
                (l.max_label(), l.data().iter().filter(|&&v| v != 0).count())
            })
            .collect()
    }

    #[test]
    fn opening_shrinks_foreground_and_count_on_clean_input() {
        for seed in 0..4 {
            let s = opening_sweep(seed, 0.0);
            assert!(s.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1), "seed {seed}: {s:?}");
        }
    }

    #[test]
    fn opening_can_cut_a_neck_into_two_seeds() {
        // a wider opening removes more foreground but may still add a label
        let s = opening_sweep(3, 0.05);
        assert!(s.windows(2).all(|w| w[1].1 <= w[0].1), "{s:?}");
        assert!(s[1].0 > s[0].0, "{s:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn never_labels_below_threshold(
            values in prop::collection::vec(0.0f32..1.0, 12 * 11 * 10),
            t in 0.1f64..0.9,
        ) {
            let vol = Volume::new(crate::VolumeMeta::isotropic([12, 11, 10], crate::DType::F32), values).unwrap();
            let mut p = ThreshWaterParams::new(t);
            p.seed_erosion_radius = 1;
            let l = threshwater(&vol, &p);
            for (&v, &id) in vol.data().iter().zip(l.data()) {
                prop_assert!(id == 0 || f64::from(v) >= t);
            }
        }
    }

    #[test]
    fn params_validate() {
        assert!(ThreshWaterParams::new(1.0).validate().is_ok());
        let mut p = ThreshWaterParams::new(1.0);
        p.opening_radius = 0;
        assert!(p.validate().is_err());
    }

    fn fused(r: f64, d: f64) -> (LabelVolume, SplitRequest, [f64; 3], [f64; 3]) {
        let n = (2.0 * r + d + 8.0) as usize;
        let m = (2.0 * r + 8.0) as usize;
        let c0 = [r + 4.0, m as f64 / 2.0, m as f64 / 2.0];
        let c1 = [r + 4.0 + d, c0[1], c0[2]];
        let l = balls([n, m, m], &[c0, c1], r).map(u32::from);
        let mid = (c0[0] + d / 2.0) as usize;
        let border = (0..l.len())
            .map(|i| l.coords(i))
            .filter(|p| p[0] == mid && l.get(*p) == 1)
            .collect();
        let req = SplitRequest {
            target_label: 1,
            markers: vec![c0.map(|c| c as usize), c1.map(|c| c as usize)],
            border_voxels: border,
        };
        (l, req, c0, c1)
    }

    #[test]
    fn fused_spheres_split_into_analytic_halves() {
        let (r, d) = (12.0, 18.0);
        let (l, req, _, _) = fused(r, d);
        let out = split_particle(&l, &req).unwrap();
        let h = r - d / 2.0;
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3)
            - std::f64::consts::PI * h * h * (3.0 * r - h) / 3.0;
        for id in [2u32, 3] {
            let n = out.data().iter().filter(|&&v| v == id).count() as f64;
            assert!((n - analytic).abs() / analytic < 0.05, "label {id}: {n} vs {analytic}");
        }
        assert_eq!(out.data().iter().filter(|&&v| v == 1).count(), 0);
    }

    #[test]
    fn split_errors() {
        let (l, req, _, _) = fused(8.0, 12.0);
        let mut bad = req.clone();
        bad.markers[0] = [0, 0, 0];
        assert!(matches!(split_particle(&l, &bad), Err(Error::Argument(_))));
        let mut leak = req.clone();
        leak.border_voxels.truncate(leak.border_voxels.len() / 2);
        assert!(matches!(split_particle(&l, &leak), Err(Error::Validation(_))));
        let mut bg = req.clone();
        bg.target_label = 0;
        assert!(split_particle(&l, &bg).is_err());
    }

    #[test]
    fn other_instances_untouched() {
        let (mut l, req, _, _) = fused(7.0, 10.0);
        l.set([0, 0, 0], 9);
        let out = split_particle(&l, &req).unwrap();
        assert_eq!(out.get([0, 0, 0]), 9);
        assert!(out.data().contains(&10) && out.data().contains(&11));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn split_partitions_the_instance(r in 5.0f64..9.0, f in 1.1f64..1.8, plane in -2i64..3) {
            let d = (r * f).round();
            let (l, mut req, c0, _) = fused(r, d);
            let mid = (c0[0] + d / 2.0) as i64 + plane;
            req.border_voxels = (0..l.len())
                .map(|i| l.coords(i))
                .filter(|p| p[0] as i64 == mid && l.get(*p) == 1)
                .collect();
            let out = split_particle(&l, &req).unwrap();
            for (a, b) in l.data().iter().zip(out.data()) {
                prop_assert_eq!(*a == 1, *b == 2 || *b == 3);
            }
            let merged = out.map(|v| u32::from(v != 0));
            prop_assert_eq!(merged, l);
        }
    }
}
