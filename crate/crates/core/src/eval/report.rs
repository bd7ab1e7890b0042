use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{multiclass_metrics, Averaging, ConfusionMatrix, FoldPlan, MetricSet};
use crate::data::{fmt_f64, ClassLabel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// What a fold runner receives: the split and the fold's own seed.
#[derive(Debug, Clone, Copy)]
pub struct FoldInput<'a> {
    pub fold: usize,
    pub train: &'a [usize],
    pub test: &'a [usize],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutput {
    /// One label per entry of `FoldInput::test`, in the same order.
    pub predictions: Vec<ClassLabel>,
    /// Sample indices a per-fold feature extractor was fitted on; `None` when
    /// the features come from outside the fold (no fitting, or one shared fit).
    pub extractor_fit: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: MetricSet,
    pub confusion: ConfusionMatrix,
    pub extractor_fit_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub averaging: Averaging,
    pub n_samples: usize,
    pub folds: Vec<FoldResult>,
    /// Mean over folds.
    pub mean: MetricSet,
    /// Sample standard deviation over folds.
    pub std: MetricSet,
    /// Metrics of the summed confusion matrix.
    pub pooled: MetricSet,
    /// Sum of the fold confusion matrices.
    pub pooled_confusion: ConfusionMatrix,
    /// `pooled_confusion / k`.
    pub averaged_confusion: ConfusionMatrix,
}

fn check_fold(plan: &FoldPlan, labels: &[ClassLabel], f: usize, train: &[usize]) -> Result<()> {
    for c in ClassLabel::ALL {
        if !train.iter().any(|&i| labels[i] == c) {
            return Err(Error::invalid(format!(
                "fold {f}: class {c} is missing from the training split"
            )));
        }
    }
    if plan.folds[f].iter().any(|&i| i >= labels.len()) {
        return Err(Error::dim(format!(
            "fold {f} indexes past the {} samples",
            labels.len()
        )));
    }
    Ok(())
}

/// Runs `run` on every fold (in parallel) and aggregates the predictions.
///
/// Fold `f` gets seed `derive_seed(seed, f)`. A runner whose extractor was
/// fitted on any sample outside its training split is rejected.
pub fn cross_validate<F>(
    method: &str,
    labels: &[ClassLabel],
    plan: &FoldPlan,
    seed: u64,
    averaging: Averaging,
    run: F,
) -> Result<EvalReport>
where
    F: Fn(&FoldInput) -> Result<FoldOutput> + Sync,
{
    if plan.n_samples() != labels.len() {
        return Err(Error::dim(format!(
            "plan covers {} samples, dataset has {}",
            plan.n_samples(),
            labels.len()
        )));
    }
    let trains: Vec<Vec<usize>> = (0..plan.k).map(|f| plan.train_indices(f)).collect();
    for (f, train) in trains.iter().enumerate() {
        check_fold(plan, labels, f, train)?;
    }
    let folds: Vec<FoldResult> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let test = plan.test_indices(f);
            let input = FoldInput {
                fold: f,
                train: &trains[f],
                test,
                seed: rng::derive_seed(seed, f as u64),
            };
            let out = run(&input)?;
            if out.predictions.len() != test.len() {
                return Err(Error::dim(format!(
                    "fold {f}: {} predictions for {} test samples",
                    out.predictions.len(),
                    test.len()
                )));
            }
            let fit = out.extractor_fit.as_deref().unwrap_or(&[]);
            if let Some(i) = fit.iter().find(|i| trains[f].binary_search(i).is_err()) {
                return Err(Error::invalid(format!("fold {f}: feature extractor was fitted on sample {i} outside the training split")));
            }
            let truth: Vec<ClassLabel> = test.iter().map(|&i| labels[i]).collect();
            let confusion = ConfusionMatrix::from_predictions(&truth, &out.predictions)?;
            Ok(FoldResult {
                fold: f,
                n_test: test.len(),
                metrics: multiclass_metrics(&confusion, averaging)?,
                confusion,
                extractor_fit_size: out.extractor_fit.as_ref().map(Vec::len),
            })
        })
        .collect::<Result<_>>()?;
    let k = folds.len() as f64;
    let mut mean = [0.0; 4];
    for f in &folds {
        for (m, v) in mean.iter_mut().zip(f.metrics.values()) {
            *m += v;
        }
    }
    let mean = mean.map(|m| m / k);
    let mut var = [0.0; 4];
    for f in &folds {
        for ((s, v), m) in var.iter_mut().zip(f.metrics.values()).zip(mean) {
            *s += (v - m) * (v - m);
        }
    }
    let var = var.map(|s| s / (k - 1.0));
    let mut pooled_confusion = ConfusionMatrix::default();
    for f in &folds {
        pooled_confusion.add(&f.confusion);
    }
    Ok(EvalReport {
        method: method.to_string(),
        k: plan.k,
        seed,
        averaging,
        n_samples: labels.len(),
        pooled: multiclass_metrics(&pooled_confusion, averaging)?,
        averaged_confusion: pooled_confusion.scaled(1.0 / k),
        pooled_confusion,
        folds,
        mean: MetricSet::from_values(mean),
        std: MetricSet::from_values(var.map(f64::sqrt)),
    })
}

impl EvalReport {
    /// One row per fold, then `mean`, `std` and `pooled` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,fold,n_test,accuracy,precision,recall,f1\n");
        let mut row = |fold: &str, n: usize, m: &MetricSet| {
            let v: Vec<String> = m.values().iter().map(|&x| fmt_f64(x)).collect();
            writeln!(s, "{},{fold},{n},{}", self.method, v.join(",")).unwrap();
        };
        for f in &self.folds {
            row(&f.fold.to_string(), f.n_test, &f.metrics);
        }
        row("mean", self.n_samples, &self.mean);
        row("std", self.n_samples, &self.std);
        row("pooled", self.n_samples, &self.pooled);
        s
    }

    /// Percent table with mean ± std and pooled rows.
    pub fn to_table(&self) -> String {
        let avg = match self.averaging {
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        };
        let mut s = format!(
            "{}-fold cross-validation, seed {}, {} subjects, {avg}-averaged Prec/Rec/F1\n",
            self.k, self.seed, self.n_samples
        );
        writeln!(
            s,
            "{:<24} {:>14} {:>14} {:>14} {:>14}",
            "Method", "Acc (%)", "Prec (%)", "Rec (%)", "F1 (%)"
        )
        .unwrap();
        let cells: Vec<String> = self
            .mean
            .values()
            .iter()
            .zip(self.std.values())
            .map(|(m, sd)| format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * sd))
            .collect();
        writeln!(
            s,
            "{:<24} {:>14} {:>14} {:>14} {:>14}",
            format!("{} (fold mean)", self.method),
            cells[0],
            cells[1],
            cells[2],
            cells[3]
        )
        .unwrap();
        let p: Vec<String> = self
            .pooled
            .values()
            .iter()
            .map(|v| format!("{:.2}", 100.0 * v))
            .collect();
        writeln!(
            s,
            "{:<24} {:>14} {:>14} {:>14} {:>14}",
            format!("{} (pooled)", self.method),
            p[0],
            p[1],
            p[2],
            p[3]
        )
        .unwrap();
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in ClassLabel::ALL {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for c in ClassLabel::ALL {
            let v: Vec<String> = self.averaged_confusion.counts[c.index()]
                .iter()
                .map(|&x| fmt_f64(x))
                .collect();
            writeln!(s, "{c},{}", v.join(",")).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }

    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.confusion_csv()).map_err(|e| Error::io(path, e))
    }

    /// Averaged confusion as a heatmap, each cell a 32×32 block shaded by its
    /// share of the true-class row (white 0, dark blue 1).
    pub fn write_confusion_ppm(&self, path: &Path) -> Result<()> {
        const CELL: usize = 32;
        let mut img = Matrix::zeros(3 * CELL, 3 * CELL);
        for r in 0..3 {
            let total: f64 = self.averaged_confusion.counts[r].iter().sum();
            for c in 0..3 {
                let v = if total > 0.0 {
                    self.averaged_confusion.counts[r][c] / total
                } else {
                    0.0
                };
                for y in 0..CELL {
                    for x in 0..CELL {
                        img.set(r * CELL + y, c * CELL + x, v);
                    }
                }
            }
        }
        crate::connectivity::write_ppm(path, &img, |v| {
            let t = v.clamp(0.0, 1.0);
            let ch = |hi: f64, lo: f64| (hi + (lo - hi) * t).round() as u8;
            [ch(255.0, 8.0), ch(255.0, 48.0), ch(255.0, 107.0)]
        })
    }

    /// Writes `report.csv`, `report.txt`, `confusion.csv` and `confusion.ppm`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_csv(&dir.join("report.csv"))?;
        self.write_table(&dir.join("report.txt"))?;
        self.write_confusion_csv(&dir.join("confusion.csv"))?;
        self.write_confusion_ppm(&dir.join("confusion.ppm"))
    }
}
