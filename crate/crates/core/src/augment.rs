//! Touching-particle augmentation and export of training pairs.
//!
//! Augmentation copies a particle from a bank so that it touches a particle
//! already in the patch, manufacturing the touching configurations that
//! instance separation has to learn from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bordercore::{encode, BorderCoreConfig};
use crate::morph::{label_components, Connectivity};
use crate::preprocess::{resample_nearest, size_normalize, zscore_normalize, GlobalStats, SizeNormSpec};
use crate::synth::{random_direction, slide_to_contact};
use crate::volume::{write_blockstore, Bounds, LabelVolume, Mask, ScalarVolume, Shape};
use crate::{Error, Result};

pub const DEFAULT_AUGMENT_PROBABILITY: f64 = 0.3;
/// Directions tried before giving up on a placement.
pub const MAX_DIRECTION_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    /// intensities over the tight bounding box
    pub intensity: ScalarVolume,
    pub mask: Mask,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleBank {
    pub entries: Vec<BankEntry>,
}

impl ParticleBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn bounding_boxes(labels: &LabelVolume) -> BTreeMap<u32, Bounds> {
    let mut boxes: BTreeMap<u32, Bounds> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let p = labels.coords(i);
        boxes
            .entry(l)
            .and_modify(|b| {
                for a in 0..3 {
                    b.lo[a] = b.lo[a].min(p[a]);
                    b.hi[a] = b.hi[a].max(p[a] + 1);
                }
            })
            .or_insert(Bounds::new(p, [p[0] + 1, p[1] + 1, p[2] + 1]));
    }
    boxes
}

/// The largest 26-connected piece of `mask` (first in raster order on ties)
/// and its tight box, given `mask` sits at `b`.
fn largest_piece(mask: &Mask, b: Bounds) -> (Mask, Bounds) {
    let (ids, n) = label_components(mask.shape(), mask.data(), Connectivity::TwentySix);
    if n <= 1 {
        return (mask.clone(), b);
    }
    let mut sizes = vec![0usize; n as usize + 1];
    for &c in &ids {
        sizes[c as usize] += 1;
    }
    let keep = (1..=n as usize).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap() as u32;
    let piece = mask.with_data(ids.iter().map(|&c| c == keep).collect());
    let mut lo = [usize::MAX; 3];
    let mut hi = [0; 3];
    for (i, _) in piece.data().iter().enumerate().filter(|(_, &m)| m) {
        let p = piece.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a] + 1);
        }
    }
    let local = Bounds::new(lo, hi);
    let global = Bounds::new([0, 1, 2].map(|a| b.lo[a] + lo[a]), [0, 1, 2].map(|a| b.lo[a] + hi[a]));
    (piece.crop_unchecked(local), global)
}

/// One entry per instance: volumes in order, ids ascending within a volume.
/// An instance in several pieces contributes only its largest.
pub fn build_bank(vols: &[ScalarVolume], labels: &[LabelVolume]) -> Result<ParticleBank> {
    if vols.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} intensity volumes but {} label volumes",
            vols.len(),
            labels.len()
        )));
    }
    let mut entries = Vec::new();
    for (k, (v, l)) in vols.iter().zip(labels).enumerate() {
        if v.shape() != l.shape() {
            return Err(Error::Argument(format!(
                "pair {k}: intensity shape {:?} differs from label shape {:?}",
                v.shape(),
                l.shape()
            )));
        }
        for (id, b) in bounding_boxes(l) {
            let (mask, b) = largest_piece(&l.crop_unchecked(b).map(|x| x == id), b);
            entries.push(BankEntry {
                intensity: v.crop_unchecked(b),
                mask,
            });
        }
    }
    Ok(ParticleBank { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// instance the new particle touches
    pub partner: u32,
    pub bank_index: usize,
    pub label: u32,
    /// patch position of the bank entry's box origin (may be negative)
    pub offset: [i64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub vol: ScalarVolume,
    pub labels: LabelVolume,
    pub placement: Option<Placement>,
}

/// The voxel of a set closest to its centroid (first in order on ties).
fn central_voxel(points: &[[i64; 3]]) -> [i64; 3] {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a] as f64 / n;
        }
    }
    let d2 = |p: &[i64; 3]| (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum::<f64>();
    *points
        .iter()
        .min_by(|a, b| d2(a).total_cmp(&d2(b)))
        .expect("non-empty point set")
}

fn in_shape(shape: Shape, p: [i64; 3]) -> bool {
    (0..3).all(|a| p[a] >= 0 && p[a] < shape[a] as i64)
}

fn flat(shape: Shape, p: [i64; 3]) -> usize {
    p[0] as usize + shape[0] * (p[1] as usize + shape[1] * p[2] as usize)
}

/// With probability `probability`, pastes a bank particle so that it touches
/// a random instance of the patch across a face without overlapping any
/// foreground. Otherwise, or when no placement is found, the input comes
/// back unchanged.
pub fn touching_augment(
    vol: &ScalarVolume,
    labels: &LabelVolume,
    bank: &ParticleBank,
    probability: f64,
    rng_seed: u64,
) -> Result<Augmented> {
    if vol.shape() != labels.shape() {
        return Err(Error::Argument(format!(
            "intensity shape {:?} differs from label shape {:?}",
            vol.shape(),
            labels.shape()
        )));
    }
    let unchanged = || Augmented {
        vol: vol.clone(),
        labels: labels.clone(),
        placement: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let u: f64 = rng.random();
    if !(u < probability) || bank.is_empty() {
        return Ok(unchanged());
    }
    let mut members: BTreeMap<u32, Vec<[i64; 3]>> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l != 0 {
            members.entry(l).or_default().push(labels.coords(i).map(|c| c as i64));
        }
    }
    if members.is_empty() {
        return Ok(unchanged());
    }
    let ids: Vec<u32> = members.keys().copied().collect();
    let partner = ids[rng.random_range(0..ids.len())];
    let bank_index = rng.random_range(0..bank.len());
    let entry = &bank.entries[bank_index];

    let p_voxels = &members[&partner];
    let anchor_p = central_voxel(p_voxels);
    let d_voxels: Vec<[i64; 3]> = entry
        .mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| entry.mask.coords(i).map(|c| c as i64))
        .collect();
    if d_voxels.is_empty() {
        return Ok(unchanged());
    }
    let anchor_d = central_voxel(&d_voxels);
    let offsets: Vec<[i64; 3]> = d_voxels
        .iter()
        .map(|p| [0, 1, 2].map(|a| p[a] - anchor_d[a]))
        .collect();

    let shape = labels.shape();
    let data = labels.data();
    let in_p = |q: [i64; 3]| in_shape(shape, q) && data[flat(shape, q)] == partner;
    let extent: usize = entry.mask.shape().iter().sum::<usize>() + shape.iter().sum::<usize>();
    let start = anchor_p.map(|c| c as f64);
    for _ in 0..MAX_DIRECTION_RETRIES {
        let dir = random_direction(&mut rng);
        let Some(at) = slide_to_contact(&offsets, start, dir, extent, in_p) else {
            continue;
        };
        let placed: Vec<[i64; 3]> = offsets
            .iter()
            .map(|o| [at[0] + o[0], at[1] + o[1], at[2] + o[2]])
            .collect();
        let clear = placed
            .iter()
            .all(|&q| in_shape(shape, q) && data[flat(shape, q)] == 0);
        if !clear {
            continue;
        }
        let label = labels.max_label() + 1;
        let mut out_v = vol.clone();
        let mut out_l = labels.clone();
        let origin = [0, 1, 2].map(|a| at[a] - anchor_d[a]);
        for (&q, &d) in placed.iter().zip(&d_voxels) {
            let i = flat(shape, q);
            out_l.data_mut()[i] = label;
            out_v.data_mut()[i] = entry.intensity.get(d.map(|c| c as usize));
        }
        return Ok(Augmented {
            vol: out_v,
            labels: out_l,
            placement: Some(Placement {
                partner,
                bank_index,
                label,
                offset: origin,
            }),
        });
    }
    Ok(unchanged())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    /// relative to the manifest's directory
    pub image: PathBuf,
    pub target: PathBuf,
    pub shape: Shape,
    pub spacing_mm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub border: BorderCoreConfig,
    pub size: SizeNormSpec,
    pub stats: GlobalStats,
    pub pairs: Vec<TrainingPair>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
/// Cell shape of exported stores.
pub const EXPORT_CHUNK: Shape = [64; 3];

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

/// Writes z-scored, size-normalised images and the border-core encoding of
/// the size-normalised labels as block-store pairs, plus `manifest.json`.
pub fn export_training_pairs(
    vols: &[ScalarVolume],
    labels: &[LabelVolume],
    cfg: &BorderCoreConfig,
    size: &SizeNormSpec,
    stats: &GlobalStats,
    out: impl AsRef<Path>,
) -> Result<Manifest> {
    if vols.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} intensity volumes but {} label volumes",
            vols.len(),
            labels.len()
        )));
    }
    cfg.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut pairs = Vec::with_capacity(vols.len());
    for (k, (v, l)) in vols.iter().zip(labels).enumerate() {
        if v.shape() != l.shape() {
            return Err(Error::Argument(format!(
                "pair {k}: intensity shape {:?} differs from label shape {:?}",
                v.shape(),
                l.shape()
            )));
        }
        let image = size_normalize(&zscore_normalize(v, stats)?, size)?;
        let target = encode(&resample_nearest(l, image.shape())?, cfg);
        let image_rel = PathBuf::from(format!("image_{k:04}.store"));
        let target_rel = PathBuf::from(format!("target_{k:04}.store"));
        write_blockstore(&image, out.join(&image_rel), EXPORT_CHUNK)?;
        write_blockstore(&target, out.join(&target_rel), EXPORT_CHUNK)?;
        pairs.push(TrainingPair {
            image: image_rel,
            target: target_rel,
            shape: image.shape(),
            spacing_mm: image.spacing(),
        });
    }
    let manifest = Manifest {
        border: *cfg,
        size: *size,
        stats: *stats,
        pairs,
    };
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
