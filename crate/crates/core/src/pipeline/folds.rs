use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset_io::Label;
use crate::preprocess::SegmentMeta;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Subject-disjoint k-fold partition of a segment pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
    }
}

struct Subject<'a> {
    name: &'a str,
    label: Label,
    segments: usize,
}

/// Partitions subjects (never individual segments) into `k` test groups.
///
/// A subject counts as murmur if any of its segments is murmur. Subjects
/// of each class are shuffled with `seed` and dealt one at a time, the
/// rarer class first, to the fold holding the fewest segments of that
/// class (then the fewest segments overall, then the lowest index).
pub fn make_folds(pool: &[SegmentMeta], k: usize, seed: u64) -> Result<FoldPlan> {
    if pool.is_empty() {
        return Err(Error::Argument("cannot split an empty segment pool".into()));
    }
    if k < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {k}")));
    }
    let mut ids = BTreeSet::new();
    let mut by_subject: BTreeMap<&str, (bool, usize)> = BTreeMap::new();
    for m in pool {
        if m.subject.is_empty() {
            return Err(Error::Validation(format!("segment {} has no subject", m.id())));
        }
        if !ids.insert(m.id()) {
            return Err(Error::Validation(format!("segment {} appears twice", m.id())));
        }
        let e = by_subject.entry(m.subject.as_str()).or_insert((false, 0));
        e.0 |= m.label == Label::Murmur;
        e.1 += 1;
    }
    if by_subject.len() < k {
        return Err(Error::Argument(format!("{} subjects cannot fill {k} folds", by_subject.len())));
    }
    let subjects: Vec<Subject> = by_subject
        .iter()
        .map(|(name, &(murmur, segments))| Subject {
            name,
            label: if murmur { Label::Murmur } else { Label::Normal },
            segments,
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<&Subject>> = Label::ALL
        .iter()
        .map(|&l| subjects.iter().filter(|s| s.label == l).collect())
        .collect();
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    let murmur_subjects = groups[Label::Murmur.index()].len();
    if murmur_subjects < k {
        log::warn!("only {murmur_subjects} murmur subjects for {k} folds; some test folds will have no murmur cases");
    }
    groups.sort_by_key(|g| g.len());

    let mut assigned: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = vec![0usize; k];
    for group in &groups {
        let mut per_class = vec![0usize; k];
        for s in group {
            let f = (0..k).min_by_key(|&f| (per_class[f], total[f], f)).expect("k >= 2");
            per_class[f] += s.segments;
            total[f] += s.segments;
            assigned.insert(s.name, f);
        }
    }

    let mut folds = vec![
        Fold {
            train: Vec::new(),
            test: Vec::new(),
        };
        k
    ];
    for m in pool {
        let home = assigned[m.subject.as_str()];
        for (f, fold) in folds.iter_mut().enumerate() {
            if f == home {
                fold.test.push(m.id());
            } else {
                fold.train.push(m.id());
            }
        }
    }
    Ok(FoldPlan { seed, k, folds })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn meta(subject: usize, index: usize, label: Label) -> SegmentMeta {
        SegmentMeta {
            recording_id: format!("rec{subject}"),
            index,
            label,
            subject: format!("s{subject}"),
            pad_len: 0,
        }
    }

    fn pool(labels: &[(usize, Label)]) -> Vec<SegmentMeta> {
        labels
            .iter()
            .enumerate()
            .flat_map(|(s, &(n, l))| (0..n).map(move |i| meta(s, i, l)))
            .collect()
    }

    fn check_partition(pool: &[SegmentMeta], plan: &FoldPlan) {
        let subject_of: BTreeMap<String, &str> = pool.iter().map(|m| (m.id(), m.subject.as_str())).collect();
        let mut seen = BTreeSet::new();
        for fold in &plan.folds {
            assert_eq!(fold.train.len() + fold.test.len(), pool.len());
            let test_subjects: BTreeSet<&str> = fold.test.iter().map(|id| subject_of[id]).collect();
            let train_subjects: BTreeSet<&str> = fold.train.iter().map(|id| subject_of[id]).collect();
            assert!(test_subjects.is_disjoint(&train_subjects));
            for id in &fold.test {
                assert!(seen.insert(id.clone()), "{id} tested twice");
            }
        }
        assert_eq!(seen.len(), pool.len());
    }

    #[test]
    fn ten_subjects_five_folds() {
        let p = pool(&[(2, Label::Normal); 10]);
        let plan = make_folds(&p, 5, 3).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 4);
        }
        check_partition(&p, &plan);
        assert_eq!(plan, make_folds(&p, 5, 3).unwrap());
    }

    #[test]
    fn mixed_classes_balance_subject_counts() {
        let mut labels = vec![(2, Label::Murmur); 3];
        labels.extend([(2, Label::Normal); 7]);
        let p = pool(&labels);
        let plan = make_folds(&p, 5, 9).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 4);
        }
        let murmur_folds = plan
            .folds
            .iter()
            .filter(|f| f.test.iter().any(|id| id.starts_with("rec0_") || id.starts_with("rec1_") || id.starts_with("rec2_")))
            .count();
        assert_eq!(murmur_folds, 3);
    }

    #[test]
    fn rejects_degenerate_pools() {
        assert!(make_folds(&[], 5, 0).is_err());
        let p = pool(&[(1, Label::Normal); 3]);
        assert!(make_folds(&p, 5, 0).is_err());
        let mut dup = pool(&[(1, Label::Normal); 6]);
        dup.push(dup[0].clone());
        assert!(matches!(make_folds(&dup, 5, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn plan_json_round_trip() {
        let p = pool(&[(1, Label::Normal), (1, Label::Murmur), (2, Label::Normal)]);
        let plan = make_folds(&p, 2, 1).unwrap();
        let back: FoldPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
        assert!(plan.to_json().contains("\"train\""));
    }

    proptest! {
        #[test]
        fn random_pools_partition_cleanly(
            subjects in proptest::collection::vec((1usize..5, any::<bool>()), 5..60),
            seed in any::<u64>(),
        ) {
            let labels: Vec<(usize, Label)> = subjects
                .iter()
                .map(|&(n, m)| (n, if m { Label::Murmur } else { Label::Normal }))
                .collect();
            let p = pool(&labels);
            let plan = make_folds(&p, 5, seed).unwrap();
            check_partition(&p, &plan);
            prop_assert_eq!(plan, make_folds(&p, 5, seed).unwrap());
        }
    }
}
