//! Cross-validation, classification metrics and reports.

mod folds;
mod report;

pub use folds::{make_folds, FoldPlan};
pub use report::{cross_validate, EvalReport, FoldInput, FoldOutput, FoldResult};

use serde::{Deserialize, Serialize};

use crate::data::ClassLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSet {
    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Self {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
        }
    }
}

/// Which ratios had a zero denominator and were set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Undefined {
    pub precision: bool,
    pub recall: bool,
}

/// Accuracy, precision, recall and F1 from one-class counts.
///
/// Precision (recall) is 0 and flagged when TP + FP (TP + FN) is 0; F1 is 0
/// whenever precision + recall is 0.
pub fn binary_metrics(tp: f64, fp: f64, fn_: f64, tn: f64) -> Result<(MetricSet, Undefined)> {
    let counts = [tp, fp, fn_, tn];
    if counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(Error::invalid(format!(
            "counts must be finite and nonnegative, got {counts:?}"
        )));
    }
    let total = tp + fp + fn_ + tn;
    if total == 0.0 {
        return Err(Error::invalid("all counts are zero"));
    }
    let mut flags = Undefined::default();
    let ratio = |num: f64, den: f64, flag: &mut bool| {
        if den > 0.0 {
            num / den
        } else {
            *flag = true;
            0.0
        }
    };
    let precision = ratio(tp, tp + fp, &mut flags.precision);
    let recall = ratio(tp, tp + fn_, &mut flags.recall);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((
        MetricSet {
            accuracy: (tp + tn) / total,
            precision,
            recall,
            f1,
        },
        flags,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean of the per-class one-vs-rest metrics.
    #[default]
    Macro,
    /// Metrics of the class-summed TP / FP / FN / TN counts.
    Micro,
}

/// 3×3 counts, rows = true class, columns = predicted class. Entries are reals
/// so fold averages fit in the same type.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[f64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[ClassLabel], predicted: &[ClassLabel]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim(format!(
                "{} labels, {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::default();
        for (t, p) in truth.iter().zip(predicted) {
            m.counts[t.index()][p.index()] += 1.0;
        }
        Ok(m)
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self
            .counts
            .iter_mut()
            .flatten()
            .zip(other.counts.iter().flatten())
        {
            *a += b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = *self;
        for v in m.counts.iter_mut().flatten() {
            *v *= s;
        }
        m
    }

    /// `(tp, fp, fn, tn)` of class `c` against the rest.
    pub fn one_vs_rest(&self, c: usize) -> (f64, f64, f64, f64) {
        let tp = self.counts[c][c];
        let row: f64 = self.counts[c].iter().sum();
        let col: f64 = (0..3).map(|r| self.counts[r][c]).sum();
        let (fp, fn_) = (col - tp, row - tp);
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }
}

/// Accuracy is trace / total; precision, recall and F1 are averaged per
/// `averaging`.
pub fn multiclass_metrics(confusion: &ConfusionMatrix, averaging: Averaging) -> Result<MetricSet> {
    let total = confusion.total();
    if !(total > 0.0) {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let accuracy = confusion.trace() / total;
    let per_class: Vec<(f64, f64, f64, f64)> = (0..3).map(|c| confusion.one_vs_rest(c)).collect();
    let m = match averaging {
        Averaging::Macro => {
            let mut sum = [0.0; 3];
            for &(tp, fp, fn_, tn) in &per_class {
                let (m, _) = binary_metrics(tp, fp, fn_, tn)?;
                sum[0] += m.precision;
                sum[1] += m.recall;
                sum[2] += m.f1;
            }
            MetricSet {
                accuracy,
                precision: sum[0] / 3.0,
                recall: sum[1] / 3.0,
                f1: sum[2] / 3.0,
            }
        }
        Averaging::Micro => {
            let s = per_class.iter().fold((0.0, 0.0, 0.0, 0.0), |a, c| {
                (a.0 + c.0, a.1 + c.1, a.2 + c.2, a.3 + c.3)
            });
            let (m, _) = binary_metrics(s.0, s.1, s.2, s.3)?;
            MetricSet { accuracy, ..m }
        }
    };
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn binary_examples() {
        let (m, f) = binary_metrics(5.0, 0.0, 0.0, 5.0).unwrap();
        assert_eq!(m.values(), [1.0; 4]);
        assert_eq!(f, Undefined::default());

        let (m, _) = binary_metrics(3.0, 1.0, 2.0, 4.0).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);

        let (m, f) = binary_metrics(0.0, 0.0, 5.0, 5.0).unwrap();
        assert_eq!((m.recall, m.f1, m.precision), (0.0, 0.0, 0.0));
        assert!(f.precision && !f.recall);

        assert!(binary_metrics(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(binary_metrics(-1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn multiclass_examples() {
        let diag = ConfusionMatrix {
            counts: [[4.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 7.0]],
        };
        assert_eq!(
            multiclass_metrics(&diag, Averaging::Macro)
                .unwrap()
                .values(),
            [1.0; 4]
        );
        let uniform = ConfusionMatrix {
            counts: [[2.0; 3]; 3],
        };
        let m = multiclass_metrics(&uniform, Averaging::Macro).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!(multiclass_metrics(&ConfusionMatrix::default(), Averaging::Macro).is_err());
    }

    /// Per-class tallies straight from the cells, then the plain mean.
    fn tally_oracle(c: &[[f64; 3]; 3]) -> [f64; 4] {
        let n: f64 = c.iter().flatten().sum();
        let mut correct = 0.0;
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for k in 0..3 {
            correct += c[k][k];
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for t in 0..3 {
                for q in 0..3 {
                    match (t == k, q == k) {
                        (true, true) => tp += c[t][q],
                        (false, true) => fp += c[t][q],
                        (true, false) => fn_ += c[t][q],
                        _ => {}
                    }
                }
            }
            let pk = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rk = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            p += pk;
            r += rk;
            f += if pk + rk > 0.0 {
                2.0 * pk * rk / (pk + rk)
            } else {
                0.0
            };
        }
        [correct / n, p / 3.0, r / 3.0, f / 3.0]
    }

    #[test]
    fn worked_confusion_matches_tally() {
        let c = [[5.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 2.0, 3.0]];
        let m = multiclass_metrics(&ConfusionMatrix { counts: c }, Averaging::Macro).unwrap();
        let o = tally_oracle(&c);
        for (a, b) in m.values().iter().zip(o) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((m.accuracy - 12.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn micro_precision_equals_accuracy() {
        let c = ConfusionMatrix {
            counts: [[5.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 2.0, 3.0]],
        };
        let m = multiclass_metrics(&c, Averaging::Micro).unwrap();
        assert!((m.precision - m.accuracy).abs() < 1e-15 && (m.recall - m.accuracy).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn random_confusions_match_tally(cells in prop::array::uniform9(0u32..20)) {
            prop_assume!(cells.iter().any(|&c| c > 0));
            let mut c = [[0.0; 3]; 3];
            for (k, v) in cells.iter().enumerate() {
                c[k / 3][k % 3] = *v as f64;
            }
            let m = multiclass_metrics(&ConfusionMatrix { counts: c }, Averaging::Macro).unwrap();
            for (a, b) in m.values().iter().zip(tally_oracle(&c)) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }

        #[test]
        fn accuracy_matches_direct_count(seed in 0u64..10_000, n in 1usize..60) {
            let mut r = rng::seeded(seed);
            let truth: Vec<ClassLabel> = (0..n).map(|_| ClassLabel::from_index(r.random_range(0..3)).unwrap()).collect();
            let pred: Vec<ClassLabel> = (0..n).map(|_| ClassLabel::from_index(r.random_range(0..3)).unwrap()).collect();
            let c = ConfusionMatrix::from_predictions(&truth, &pred).unwrap();
            let direct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / n as f64;
            prop_assert_eq!(multiclass_metrics(&c, Averaging::Macro).unwrap().accuracy, direct);
        }
    }
}
