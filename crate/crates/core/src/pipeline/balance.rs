use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset_io::Label;
use crate::{Error, Result};

/// Repeats minority-class items until both classes are equally frequent,
/// then shuffles. The minority list is repeated whole as often as it fits;
/// the remainder is a seeded sample without replacement. Majority items
/// appear exactly once.
pub fn balance_upsample<T: Clone>(items: &[T], labels: &[Label], seed: u64) -> Result<Vec<T>> {
    if items.len() != labels.len() {
        return Err(Error::Argument(format!("{} items but {} labels", items.len(), labels.len())));
    }
    let mut by_class: [Vec<&T>; 2] = [Vec::new(), Vec::new()];
    for (item, label) in items.iter().zip(labels) {
        by_class[label.index()].push(item);
    }
    if by_class.iter().any(Vec::is_empty) {
        return Err(Error::Config(
            "training fold holds a single class; cannot balance by upsampling".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (minority, majority) = if by_class[0].len() <= by_class[1].len() {
        (&by_class[0], &by_class[1])
    } else {
        (&by_class[1], &by_class[0])
    };
    let (m, big) = (minority.len(), majority.len());
    let mut out: Vec<T> = Vec::with_capacity(2 * big);
    out.extend(majority.iter().map(|&t| t.clone()));
    for _ in 0..big / m {
        out.extend(minority.iter().map(|&t| t.clone()));
    }
    let mut extra = index::sample(&mut rng, m, big % m).into_vec();
    extra.sort_unstable();
    out.extend(extra.into_iter().map(|i| minority[i].clone()));
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    use super::*;

    fn labelled(normal: usize, murmur: usize) -> (Vec<usize>, Vec<Label>) {
        let labels: Vec<Label> = (0..normal + murmur)
            .map(|i| if i < normal { Label::Normal } else { Label::Murmur })
            .collect();
        ((0..normal + murmur).collect(), labels)
    }

    fn counts(out: &[usize]) -> BTreeMap<usize, usize> {
        let mut c = BTreeMap::new();
        for &i in out {
            *c.entry(i).or_insert(0) += 1;
        }
        c
    }

    #[test]
    fn thirty_nine_to_one() {
        let (ids, labels) = labelled(39, 1);
        let out = balance_upsample(&ids, &labels, 0).unwrap();
        assert_eq!(out.len(), 78);
        assert_eq!(counts(&out)[&39], 39);
    }

    #[test]
    fn balanced_input_is_permuted() {
        let (ids, labels) = labelled(5, 5);
        let mut out = balance_upsample(&ids, &labels, 4).unwrap();
        out.sort_unstable();
        assert_eq!(out, ids);
    }

    #[test]
    fn full_dataset_scale_fold() {
        let (ids, labels) = labelled(2440, 218);
        let out = balance_upsample(&ids, &labels, 1).unwrap();
        assert_eq!(out.len(), 4880);
        let c = counts(&out);
        let murmur: Vec<usize> = (2440..2658).map(|i| c[&i]).collect();
        assert_eq!(murmur.iter().sum::<usize>(), 2440);
        assert_eq!(murmur.iter().filter(|&&n| n == 12).count(), 42);
        assert_eq!(murmur.iter().filter(|&&n| n == 11).count(), 176);
        assert!((0..2440).all(|i| c[&i] == 1));
    }

    #[test]
    fn single_class_is_a_config_error() {
        let (ids, labels) = labelled(4, 0);
        assert!(matches!(balance_upsample(&ids, &labels, 0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn classes_end_up_equal(normal in 1usize..200, murmur in 1usize..200, seed in any::<u64>()) {
            let (ids, labels) = labelled(normal, murmur);
            let out = balance_upsample(&ids, &labels, seed).unwrap();
            let n = out.iter().filter(|&&i| i < normal).count();
            prop_assert_eq!(n, out.len() - n);
            prop_assert_eq!(out.len(), 2 * normal.max(murmur));
            let c = counts(&out);
            let (lo, hi) = if normal <= murmur { (0..normal, normal.max(murmur) / normal) } else { (normal..normal + murmur, normal / murmur) };
            for i in lo {
                prop_assert!(c[&i] == hi || c[&i] == hi + 1);
            }
            prop_assert_eq!(&out, &balance_upsample(&ids, &labels, seed).unwrap());
        }
    }
}
