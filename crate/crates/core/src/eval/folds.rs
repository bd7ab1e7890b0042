use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::rng;

/// Disjoint test folds covering every sample; fold `f` trains on the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Sorted sample indices of each test fold.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn n_samples(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Stratified k-fold split.
///
/// Each class's indices are shuffled with their own seeded stream, then the
/// classes (in index order) are dealt round-robin onto the folds by one counter
/// that carries over between classes, so fold sizes differ by at most one and so
/// do each class's per-fold counts.
pub fn make_folds(labels: &[ClassLabel], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for c in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < k {
            log::warn!(
                "class {c} has {} samples for {k} folds; some folds will lack it",
                idx.len()
            );
        }
        idx.shuffle(&mut rng::seeded(rng::derive_seed(seed, c.index() as u64)));
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(counts: [usize; 3]) -> Vec<ClassLabel> {
        let mut v = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            v.extend(std::iter::repeat_n(ClassLabel::from_index(c).unwrap(), n));
        }
        v
    }

    #[test]
    fn three_class_counts_60_58_45() {
        let plan = make_folds(&labels([60, 58, 45]), 10, 3).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 16 || f.len() == 17));
        assert_eq!(plan.n_samples(), 163);
        assert_eq!(plan, make_folds(&labels([60, 58, 45]), 10, 3).unwrap());
        assert_ne!(plan, make_folds(&labels([60, 58, 45]), 10, 4).unwrap());
    }

    #[test]
    fn singleton_folds() {
        let plan = make_folds(&labels([4, 3, 3]), 10, 0).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 1));
        assert!(make_folds(&labels([3, 3, 3]), 10, 0).is_err());
        assert!(make_folds(&labels([3, 3, 3]), 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_balance(a in 1usize..40, b in 1usize..40, c in 1usize..40, k in 2usize..11, seed in 0u64..1000) {
            let y = labels([a, b, c]);
            prop_assume!(y.len() >= k);
            let plan = make_folds(&y, k, seed).unwrap();
            let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
            let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for class in ClassLabel::ALL {
                let per: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| y[i] == class).count()).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
            let train = plan.train_indices(0);
            prop_assert_eq!(train.len() + plan.folds[0].len(), y.len());
            prop_assert!(train.iter().all(|i| !plan.folds[0].contains(i)));
        }
    }
}
