//! One-vs-rest plumbing shared by the fuzzy classifiers.

use rayon::prelude::*;

use crate::data::ClassLabel;
use crate::error::{Error, Result};

/// Errors unless every class has at least one sample.
pub fn require_all_classes(labels: &[ClassLabel]) -> Result<()> {
    for c in ClassLabel::ALL {
        if !labels.contains(&c) {
            return Err(Error::invalid(format!("class {c} has no training samples")));
        }
    }
    Ok(())
}

/// 1.0 for samples of `class`, 0.0 otherwise.
pub fn binary_targets(labels: &[ClassLabel], class: ClassLabel) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == class { 1.0 } else { 0.0 })
        .collect()
}

/// Fits one model per class (in parallel), in class-index order.
pub fn fit_per_class<M: Send>(
    labels: &[ClassLabel],
    fit: impl Fn(ClassLabel, &[f64]) -> Result<M> + Sync,
) -> Result<Vec<M>> {
    require_all_classes(labels)?;
    ClassLabel::ALL
        .par_iter()
        .map(|&c| fit(c, &binary_targets(labels, c)))
        .collect()
}

/// Class with the highest score; exact ties go to the lowest class index.
pub fn argmax_label(scores: &[f64; 3]) -> ClassLabel {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    ClassLabel::from_index(best).expect("three classes")
}
