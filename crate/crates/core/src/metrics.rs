//! Segmentation and separation scores for a predicted label map against a
//! reference: voxel F1, match F1, instance F1, merger and splitter ratios.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume::LabelVolume;
use crate::{Error, Result};

/// Minimum pair F1 for a predicted and a reference instance to match.
pub const MATCH_MIN_F1: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    /// `2TP / (2TP + FP + FN)`, or 1 when there is nothing on either side.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }
}

#[inline]
fn pair_f1(overlap: u64, pred_size: u64, ref_size: u64) -> f64 {
    (2 * overlap) as f64 / (pred_size + ref_size) as f64
}

/// Joint voxel counts of (predicted id, reference id), background included.
#[derive(Debug, Clone, Default)]
pub struct OverlapTable {
    counts: BTreeMap<(u32, u32), u64>,
    pred_sizes: BTreeMap<u32, u64>,
    ref_sizes: BTreeMap<u32, u64>,
}

impl OverlapTable {
    pub fn new(pred: &LabelVolume, reference: &LabelVolume) -> Result<Self> {
        check_shapes(pred, reference)?;
        let counts: HashMap<(u32, u32), u64> = pred
            .data()
            .par_chunks(1 << 16)
            .zip(reference.data().par_chunks(1 << 16))
            .map(|(p, r)| {
                let mut m: HashMap<(u32, u32), u64> = HashMap::new();
                for (&a, &b) in p.iter().zip(r) {
                    *m.entry((a, b)).or_default() += 1;
                }
                m
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            });
        let counts: BTreeMap<(u32, u32), u64> = counts.into_iter().collect();
        let mut pred_sizes = BTreeMap::new();
        let mut ref_sizes = BTreeMap::new();
        for (&(p, r), &n) in &counts {
            if p != 0 {
                *pred_sizes.entry(p).or_default() += n;
            }
            if r != 0 {
                *ref_sizes.entry(r).or_default() += n;
            }
        }
        Ok(OverlapTable {
            counts,
            pred_sizes,
            ref_sizes,
        })
    }

    pub fn overlap(&self, pred: u32, reference: u32) -> u64 {
        self.counts.get(&(pred, reference)).copied().unwrap_or(0)
    }

    pub fn pred_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.pred_sizes.keys().copied()
    }

    pub fn ref_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.ref_sizes.keys().copied()
    }

    pub fn pred_size(&self, id: u32) -> u64 {
        self.pred_sizes.get(&id).copied().unwrap_or(0)
    }

    pub fn ref_size(&self, id: u32) -> u64 {
        self.ref_sizes.get(&id).copied().unwrap_or(0)
    }

    /// Pairs of nonzero ids that share at least one voxel, with their count.
    pub fn foreground_pairs(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.counts
            .iter()
            .filter(|((p, r), _)| *p != 0 && *r != 0)
            .map(|(&(p, r), &n)| (p, r, n))
    }

    pub fn voxel_confusion(&self) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for (&(p, r), &n) in &self.counts {
            match (p != 0, r != 0) {
                (true, true) => cm.tp += n,
                (true, false) => cm.fp += n,
                (false, true) => cm.fn_ += n,
                (false, false) => cm.tn += n,
            }
        }
        cm
    }

    fn pair_f1(&self, pred: u32, reference: u32) -> f64 {
        pair_f1(
            self.overlap(pred, reference),
            self.pred_size(pred),
            self.ref_size(reference),
        )
    }
}

fn check_shapes(pred: &LabelVolume, reference: &LabelVolume) -> Result<()> {
    if pred.shape() != reference.shape() {
        return Err(Error::Argument(format!(
            "prediction shape {:?} differs from reference shape {:?}",
            pred.shape(),
            reference.shape()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: u32,
    #[serde(rename = "ref")]
    pub reference: u32,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
    pub unmatched_pred: Vec<u32>,
    pub unmatched_ref: Vec<u32>,
}

impl MatchSet {
    pub fn confusion(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.pairs.len() as u64,
            fp: self.unmatched_pred.len() as u64,
            fn_: self.unmatched_ref.len() as u64,
            tn: 0,
        }
    }
}

/// Greedy one-to-one matching by descending pair F1 (ties by ascending
/// reference id, then predicted id); pairs below [`MATCH_MIN_F1`] never match.
pub fn match_from_table(table: &OverlapTable) -> MatchSet {
    let mut candidates: Vec<MatchPair> = table
        .foreground_pairs()
        .map(|(p, r, n)| MatchPair {
            pred: p,
            reference: r,
            f1: pair_f1(n, table.pred_size(p), table.ref_size(r)),
        })
        .filter(|m| m.f1 >= MATCH_MIN_F1)
        .collect();
    candidates.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then(a.reference.cmp(&b.reference))
            .then(a.pred.cmp(&b.pred))
    });
    let mut used_pred = std::collections::BTreeSet::new();
    let mut used_ref = std::collections::BTreeSet::new();
    let mut pairs = Vec::new();
    for c in candidates {
        if used_pred.contains(&c.pred) || used_ref.contains(&c.reference) {
            continue;
        }
        used_pred.insert(c.pred);
        used_ref.insert(c.reference);
        pairs.push(c);
    }
    MatchSet {
        pairs,
        unmatched_pred: table.pred_ids().filter(|p| !used_pred.contains(p)).collect(),
        unmatched_ref: table.ref_ids().filter(|r| !used_ref.contains(r)).collect(),
    }
}

pub fn match_instances(pred: &LabelVolume, reference: &LabelVolume) -> Result<MatchSet> {
    Ok(match_from_table(&OverlapTable::new(pred, reference)?))
}

/// Foreground/background F1 over all voxels.
pub fn f1_voxel(pred: &LabelVolume, reference: &LabelVolume) -> Result<f64> {
    check_shapes(pred, reference)?;
    let cm = pred
        .data()
        .par_iter()
        .zip(reference.data())
        .fold(ConfusionMatrix::default, |mut cm, (&p, &r)| {
            match (p != 0, r != 0) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
            cm
        })
        .reduce(ConfusionMatrix::default, |a, b| ConfusionMatrix {
            tp: a.tp + b.tp,
            fp: a.fp + b.fp,
            fn_: a.fn_ + b.fn_,
            tn: a.tn + b.tn,
        });
    Ok(cm.f1())
}

/// F1 over matched (TP), unmatched predicted (FP) and unmatched reference (FN) counts.
pub fn f1_match(m: &MatchSet) -> f64 {
    m.confusion().f1()
}

fn f1_instance_from(table: &OverlapTable, m: &MatchSet) -> f64 {
    let n = m.pairs.len() + m.unmatched_pred.len() + m.unmatched_ref.len();
    if n == 0 {
        return 1.0;
    }
    let sum: f64 = m.pairs.iter().map(|p| table.pair_f1(p.pred, p.reference)).sum();
    sum / n as f64
}

/// Mean voxelwise F1 over matched pairs, with every unmatched instance on
/// either side contributing 0.
pub fn f1_instance(pred: &LabelVolume, reference: &LabelVolume, m: &MatchSet) -> Result<f64> {
    Ok(f1_instance_from(&OverlapTable::new(pred, reference)?, m))
}

/// Groups of two or more `members` that share the same majority partner.
/// `partners(member)` lists (partner id, overlap); ties go to the smaller id.
fn majority_groups(
    members: impl Iterator<Item = u32>,
    overlaps: impl Fn(u32) -> Vec<(u32, u64)>,
) -> Vec<Vec<u32>> {
    let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for m in members {
        let best = overlaps(m)
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((partner, _)) = best {
            groups.entry(partner).or_default().push(m);
        }
    }
    groups.into_values().filter(|g| g.len() >= 2).collect()
}

fn ratio(groups: &[Vec<u32>], particles: usize) -> f64 {
    if particles == 0 {
        return 0.0;
    }
    let excess: usize = groups.iter().map(|g| g.len() - 1).sum();
    excess as f64 / particles as f64
}

fn merger_groups(table: &OverlapTable) -> Vec<Vec<u32>> {
    let mut by_ref: BTreeMap<u32, Vec<(u32, u64)>> = BTreeMap::new();
    for (p, r, n) in table.foreground_pairs() {
        by_ref.entry(r).or_default().push((p, n));
    }
    majority_groups(table.ref_ids(), |r| by_ref.get(&r).cloned().unwrap_or_default())
}

fn splitter_groups(table: &OverlapTable) -> Vec<Vec<u32>> {
    let mut by_pred: BTreeMap<u32, Vec<(u32, u64)>> = BTreeMap::new();
    for (p, r, n) in table.foreground_pairs() {
        by_pred.entry(p).or_default().push((r, n));
    }
    majority_groups(table.pred_ids(), |p| by_pred.get(&p).cloned().unwrap_or_default())
}

/// Reference instances merged into one prediction. Each reference votes for
/// the predicted instance it overlaps most; predictions collecting two or
/// more votes form a merger group of reference ids.
pub fn merger_ratio(pred: &LabelVolume, reference: &LabelVolume) -> Result<(f64, Vec<Vec<u32>>)> {
    let t = OverlapTable::new(pred, reference)?;
    let g = merger_groups(&t);
    Ok((ratio(&g, t.ref_sizes.len()), g))
}

/// Predictions that split one reference instance, grouped as predicted ids.
pub fn splitter_ratio(pred: &LabelVolume, reference: &LabelVolume) -> Result<(f64, Vec<Vec<u32>>)> {
    let t = OverlapTable::new(pred, reference)?;
    let g = splitter_groups(&t);
    Ok((ratio(&g, t.ref_sizes.len()), g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_voxel: f64,
    pub f1_match: f64,
    pub f1_instance: f64,
    pub merger_ratio: f64,
    pub splitter_ratio: f64,
    pub mergers: Vec<Vec<u32>>,
    pub splitters: Vec<Vec<u32>>,
    pub particle_count: usize,
    pub predicted_count: usize,
    pub cm_voxel: ConfusionMatrix,
    pub cm_match: ConfusionMatrix,
    pub matches: MatchSet,
}

pub fn evaluate(pred: &LabelVolume, reference: &LabelVolume) -> Result<MetricsReport> {
    let t = OverlapTable::new(pred, reference)?;
    let m = match_from_table(&t);
    let mergers = merger_groups(&t);
    let splitters = splitter_groups(&t);
    let particles = t.ref_sizes.len();
    let cm_voxel = t.voxel_confusion();
    Ok(MetricsReport {
        f1_voxel: cm_voxel.f1(),
        f1_match: f1_match(&m),
        f1_instance: f1_instance_from(&t, &m),
        merger_ratio: ratio(&mergers, particles),
        splitter_ratio: ratio(&splitters, particles),
        mergers,
        splitters,
        particle_count: particles,
        predicted_count: t.pred_sizes.len(),
        cm_voxel,
        cm_match: m.confusion(),
        matches: m,
    })
}

/// True when both maps have identical background and their instances
/// correspond one to one.
pub fn same_partition(a: &LabelVolume, b: &LabelVolume) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let mut fwd: HashMap<u32, u32> = HashMap::new();
    let mut bwd: HashMap<u32, u32> = HashMap::new();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;
    use proptest::prelude::*;

    fn line(values: &[u32]) -> LabelVolume {
        Volume::from_fn([values.len(), 1, 1], |p| values[p[0]])
    }

    #[test]
    fn voxel_f1_cases() {
        let a = line(&[1, 1, 0, 2]);
        assert_eq!(f1_voxel(&a, &a).unwrap(), 1.0);
        // pred 3 voxels, ref 4, overlap 2
        let p = line(&[1, 1, 1, 0, 0, 0]);
        let r = line(&[0, 2, 2, 2, 2, 0]);
        assert!((f1_voxel(&p, &r).unwrap() - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(f1_voxel(&line(&[0, 0]), &line(&[0, 3])).unwrap(), 0.0);
        assert_eq!(f1_voxel(&line(&[0, 0]), &line(&[0, 0])).unwrap(), 1.0);
        assert!(f1_voxel(&line(&[0]), &line(&[0, 0])).is_err());
    }

    #[test]
    fn match_cases() {
        let a = line(&[1, 1, 0, 2, 2, 2]);
        let m = match_instances(&a, &a).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert!(m.pairs.iter().all(|p| p.f1 == 1.0));

        // one blob over two references
        let p = line(&[5, 5, 5, 5, 5, 5]);
        let r = line(&[1, 1, 1, 2, 2, 2]);
        let m = match_instances(&p, &r).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].reference, 1);
        assert_eq!(m.unmatched_ref, vec![2]);

        // overlap of 1 voxel between sizes 1 and 39: F1 = 2/40 = 0.05
        let mut pv = vec![0u32; 40];
        pv[0] = 1;
        let m = match_instances(&line(&pv), &line(&[1; 40])).unwrap();
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn match_f1_cases() {
        let m = MatchSet {
            pairs: vec![MatchPair { pred: 1, reference: 1, f1: 1.0 }],
            unmatched_pred: vec![2],
            unmatched_ref: vec![3],
        };
        assert_eq!(f1_match(&m), 0.5);
        let all = MatchSet { unmatched_pred: vec![], unmatched_ref: vec![], ..m.clone() };
        assert_eq!(f1_match(&all), 1.0);
        let none = MatchSet { pairs: vec![], ..m };
        assert_eq!(f1_match(&none), 0.0);
        assert_eq!(f1_match(&MatchSet::default()), 1.0);
    }

    #[test]
    fn instance_f1_cases() {
        let a = line(&[1, 1, 0, 2]);
        let m = match_instances(&a, &a).unwrap();
        assert_eq!(f1_instance(&a, &a, &m).unwrap(), 1.0);
        // one pair at 4/7 plus one unmatched reference
        let p = line(&[1, 1, 1, 0, 0, 0, 0, 0]);
        let r = line(&[0, 2, 2, 2, 2, 0, 0, 3]);
        let m = match_instances(&p, &r).unwrap();
        assert_eq!(m.unmatched_ref, vec![3]);
        assert!((f1_instance(&p, &r, &m).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        let e = line(&[0, 0]);
        assert_eq!(f1_instance(&e, &e, &match_instances(&e, &e).unwrap()).unwrap(), 1.0);
    }

    /// Ten reference instances; `pred` copies them with edits.
    fn ten() -> Vec<u32> {
        (0..40).map(|i| if i % 4 == 3 { 0 } else { i / 4 + 1 }).collect()
    }

    #[test]
    fn merger_cases() {
        let r = ten();
        let mut p = r.clone();
        for v in p.iter_mut() {
            if *v == 2 {
                *v = 1;
            }
        }
        let (ratio, g) = merger_ratio(&line(&p), &line(&r)).unwrap();
        assert_eq!(g, vec![vec![1, 2]]);
        assert!((ratio - 0.1).abs() < 1e-15);
        assert_eq!(merger_ratio(&line(&r), &line(&r)).unwrap(), (0.0, vec![]));

        let r3 = line(&[1, 1, 2, 2, 3, 3]);
        let (ratio, g) = merger_ratio(&line(&[9; 6]), &r3).unwrap();
        assert_eq!(g, vec![vec![1, 2, 3]]);
        assert!((ratio - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(merger_ratio(&line(&[1, 0]), &line(&[0, 0])).unwrap(), (0.0, vec![]));
    }

    #[test]
    fn splitter_cases() {
        let r = ten();
        let mut p = r.clone();
        p[1] = 77;
        let (ratio, g) = splitter_ratio(&line(&p), &line(&r)).unwrap();
        assert_eq!(g, vec![vec![1, 77]]);
        assert!((ratio - 0.1).abs() < 1e-15);
        assert_eq!(splitter_ratio(&line(&r), &line(&r)).unwrap().0, 0.0);

        // four references, one of them cut into four pieces
        let r4 = line(&[1, 1, 1, 1, 2, 3, 4]);
        let p4 = line(&[5, 6, 7, 8, 2, 3, 4]);
        let (ratio, g) = splitter_ratio(&p4, &r4).unwrap();
        assert_eq!(g, vec![vec![5, 6, 7, 8]]);
        assert!((ratio - 0.75).abs() < 1e-15);
    }

    #[test]
    fn evaluate_perfect_and_mixed() {
        let r = line(&ten());
        let rep = evaluate(&r, &r).unwrap();
        assert_eq!(
            (rep.f1_voxel, rep.f1_match, rep.f1_instance, rep.merger_ratio, rep.splitter_ratio),
            (1.0, 1.0, 1.0, 0.0, 0.0)
        );

        // six particles: 1 and 2 merged, 5 split into two pieces
        let r6 = line(&[1, 1, 0, 2, 2, 0, 3, 3, 0, 4, 4, 0, 5, 5, 5, 5, 0, 6, 6]);
        let p6 = line(&[1, 1, 0, 1, 1, 0, 3, 3, 0, 4, 4, 0, 5, 5, 9, 9, 0, 6, 6]);
        let rep = evaluate(&p6, &r6).unwrap();
        assert_eq!(rep.mergers, vec![vec![1, 2]]);
        assert_eq!(rep.splitters, vec![vec![5, 9]]);
        assert!((rep.merger_ratio - 1.0 / 6.0).abs() < 1e-15);
        assert!((rep.splitter_ratio - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(rep.f1_voxel, f1_voxel(&p6, &r6).unwrap());
        let m = match_instances(&p6, &r6).unwrap();
        assert_eq!(rep.matches, m);
        assert_eq!(rep.f1_match, f1_match(&m));
        assert_eq!(rep.f1_instance, f1_instance(&p6, &r6, &m).unwrap());
        let json = serde_json::to_string(&rep).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn one_merger_among_n() {
        for n in 2..12u32 {
            let r: Vec<u32> = (0..n * 3).map(|i| i / 3 + 1).collect();
            let p: Vec<u32> = r.iter().map(|&v| if v == 2 { 1 } else { v }).collect();
            let (ratio, _) = merger_ratio(&line(&p), &line(&r)).unwrap();
            assert_eq!(ratio, 1.0 / n as f64);
        }
    }

    #[test]
    fn partition_comparison() {
        assert!(same_partition(&line(&[1, 1, 0, 2]), &line(&[7, 7, 0, 3])));
        assert!(!same_partition(&line(&[1, 1, 0, 2]), &line(&[7, 7, 0, 7])));
        assert!(!same_partition(&line(&[1, 2]), &line(&[1, 1])));
        assert!(!same_partition(&line(&[1, 0]), &line(&[1, 1])));
    }

    /// Relabelling that keeps the order of ids, so id-based tie rules agree.
    fn monotone(v: &[u32], k: u32) -> Vec<u32> {
        v.iter().map(|&x| if x == 0 { 0 } else { 3 * x + k }).collect()
    }

    fn scrambled(v: &[u32], k: u32) -> Vec<u32> {
        v.iter().map(|&x| if x == 0 { 0 } else { (x * 7 + k) % 101 + 1 }).collect()
    }

    /// Whether any id-based tie rule decides something for this pair of maps.
    fn has_ties(p: &LabelVolume, r: &LabelVolume) -> bool {
        let t = OverlapTable::new(p, r).unwrap();
        let fg: Vec<(u32, u32, u64)> = t.foreground_pairs().collect();
        let f1 = |&(a, b, n): &(u32, u32, u64)| pair_f1(n, t.pred_size(a), t.ref_size(b));
        let best = |side: usize, id: u32| {
            fg.iter()
                .filter(|x| if side == 0 { x.0 == id } else { x.1 == id })
                .map(|x| x.2)
                .max()
                .unwrap_or(0)
        };
        for (i, x) in fg.iter().enumerate() {
            for y in &fg[i + 1..] {
                let tied_match = f1(x) == f1(y) && f1(x) >= MATCH_MIN_F1;
                if x.0 == y.0 && (tied_match || (x.2 == y.2 && x.2 == best(0, x.0))) {
                    return true;
                }
                if x.1 == y.1 && (tied_match || (x.2 == y.2 && x.2 == best(1, x.1))) {
                    return true;
                }
            }
        }
        false
    }

    /// Piecewise-constant label line, which looks more like real label maps
    /// than independent noise.
    fn runs() -> impl Strategy<Value = Vec<u32>> {
        proptest::collection::vec((0u32..7, 1usize..12), 1..20).prop_map(|rs| {
            let mut v: Vec<u32> = rs.into_iter().flat_map(|(l, n)| std::iter::repeat_n(l, n)).collect();
            v.resize(60, 0);
            v
        })
    }

    fn assert_same_scores(a: &MetricsReport, b: &MetricsReport) {
        assert_eq!(a.f1_voxel, b.f1_voxel);
        assert_eq!(a.f1_match, b.f1_match);
        assert!((a.f1_instance - b.f1_instance).abs() < 1e-12);
        assert_eq!(a.merger_ratio, b.merger_ratio);
        assert_eq!(a.splitter_ratio, b.splitter_ratio);
    }

    proptest! {
        #[test]
        fn scores_bounded_and_relabelling_invariant(
            p in runs(),
            r in runs(),
            k in 0u32..50,
        ) {
            let (pv, rv) = (line(&p), line(&r));
            let rep = evaluate(&pv, &rv).unwrap();
            for s in [rep.f1_voxel, rep.f1_match, rep.f1_instance] {
                prop_assert!((0.0..=1.0).contains(&s));
            }
            prop_assert!(rep.merger_ratio >= 0.0 && rep.splitter_ratio >= 0.0);
            assert_same_scores(&rep, &evaluate(&line(&monotone(&p, k)), &line(&monotone(&r, k + 3))).unwrap());
            if !has_ties(&pv, &rv) {
                assert_same_scores(&rep, &evaluate(&line(&scrambled(&p, k)), &line(&scrambled(&r, k + 3))).unwrap());
            }
        }

        #[test]
        fn match_f1_is_symmetric(p in runs(), r in runs()) {
            prop_assume!(!has_ties(&line(&p), &line(&r)));
            let m = match_instances(&line(&p), &line(&r)).unwrap();
            let w = match_instances(&line(&r), &line(&p)).unwrap();
            prop_assert_eq!(m.unmatched_pred.len(), w.unmatched_ref.len());
            prop_assert_eq!(m.unmatched_ref.len(), w.unmatched_pred.len());
            prop_assert_eq!(f1_match(&m), f1_match(&w));
        }
    }
}
