//! One-way ANOVA, chi-square test of independence and per-edge screening.

pub mod special;

use rayon::prelude::*;
use serde::Serialize;

use crate::connectivity::ConnectivityMatrix;
use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// One-way ANOVA across `groups`.
///
/// With zero within-group variance, F is 0 when the group means also coincide and
/// +∞ (p = 0) otherwise.
pub fn one_way_anova<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::invalid("ANOVA needs at least 2 groups"));
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().len() < 2) {
        return Err(Error::invalid(format!(
            "ANOVA group {i} has fewer than 2 samples"
        )));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let g = g.as_ref();
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    // Floating noise on exactly-equal means shows up as ~1e-30 sums of squares.
    let scale = groups
        .iter()
        .flat_map(|g| g.as_ref())
        .map(|v| v * v)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let negligible = |ss: f64| ss <= scale * 1e-24;
    let f_stat = if negligible(ss_within) {
        if negligible(ss_between) {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ms_between / ms_within
    };
    let p_value = special::f_survival(f_stat, df_between as f64, df_within as f64).clamp(0.0, 1.0);
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
    })
}

/// Pearson chi-square test of independence on a contingency table of counts.
pub fn chi_square_independence(table: &Matrix) -> Result<ChiSquareResult> {
    let (r, c) = (table.rows(), table.cols());
    if r < 2 || c < 2 {
        return Err(Error::invalid(
            "contingency table needs at least 2 rows and 2 columns",
        ));
    }
    if table
        .as_slice()
        .iter()
        .any(|v| !(*v >= 0.0) || !v.is_finite())
    {
        return Err(Error::invalid(
            "contingency counts must be finite and nonnegative",
        ));
    }
    let row_sums: Vec<f64> = table.iter_rows().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c)
        .map(|j| (0..r).map(|i| table.get(i, j)).sum())
        .collect();
    if let Some(i) = row_sums.iter().position(|&s| s == 0.0) {
        return Err(Error::invalid(format!("row {i} has a zero marginal")));
    }
    if let Some(j) = col_sums.iter().position(|&s| s == 0.0) {
        return Err(Error::invalid(format!("column {j} has a zero marginal")));
    }
    let total: f64 = row_sums.iter().sum();
    let mut statistic = 0.0;
    for i in 0..r {
        for j in 0..c {
            let expected = row_sums[i] * col_sums[j] / total;
            let d = table.get(i, j) - expected;
            statistic += d * d / expected;
        }
    }
    let df = (r - 1) * (c - 1);
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: special::chi2_survival(statistic, df as f64).clamp(0.0, 1.0),
    })
}

/// One screened connectivity edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeResult {
    pub i: usize,
    pub j: usize,
    pub f_stat: f64,
    pub p_value: f64,
}

/// Runs a one-way ANOVA across classes on every upper-triangle edge and keeps the
/// edges with `p <= alpha`, sorted by ascending p (ties by edge index).
///
/// No multiple-comparison correction is applied.
pub fn edge_screen(
    matrices: &[ConnectivityMatrix],
    labels: &[ClassLabel],
    alpha: f64,
) -> Result<Vec<EdgeResult>> {
    if matrices.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} matrices but {} labels",
            matrices.len(),
            labels.len()
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1]")));
    }
    let size = matrices.first().map_or(0, |m| m.size());
    if let Some(m) = matrices.iter().find(|m| m.size() != size) {
        return Err(Error::dim(format!(
            "subject {} has a {}x{} matrix, expected {size}x{size}",
            m.subject_id,
            m.size(),
            m.size()
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ClassLabel::COUNT];
    for (k, l) in labels.iter().enumerate() {
        members[l.index()].push(k);
    }
    members.retain(|m| !m.is_empty());
    if members.len() < 2 || members.iter().any(|m| m.len() < 2) {
        return Err(Error::invalid(
            "edge screening needs at least 2 samples in each present class (and 2 classes)",
        ));
    }
    let edges: Vec<(usize, usize)> = (0..size)
        .flat_map(|i| (i + 1..size).map(move |j| (i, j)))
        .collect();
    let mut kept: Vec<EdgeResult> = edges
        .par_iter()
        .map(|&(i, j)| {
            let groups: Vec<Vec<f64>> = members
                .iter()
                .map(|m| m.iter().map(|&k| matrices[k].values.get(i, j)).collect())
                .collect();
            one_way_anova(&groups).map(|a| EdgeResult {
                i,
                j,
                f_stat: a.f_stat,
                p_value: a.p_value,
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.p_value <= alpha)
        .collect();
    kept.sort_by(|a, b| {
        a.p_value
            .total_cmp(&b.p_value)
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    });
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anova_identical_groups() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn anova_separated_groups() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![101.0, 102.0, 103.0]]).unwrap();
        assert!(r.f_stat > 1e4);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn anova_matches_hand_table() {
        // Means 2, 4, 6; grand mean 4. SSB = 3·(4 + 0 + 4) = 24 on 2 df → MSB = 12.
        // SSW = 2 + 2 + 2 = 6 on 6 df → MSW = 1. F = 12.
        // With d1 = 2 the survival is (1 + 2F/d2)^(-d2/2) = 5^-3 = 0.008.
        let r = one_way_anova(&[
            vec![3.0, 1.0, 2.0],
            vec![5.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0],
        ])
        .unwrap();
        assert!((r.f_stat - 12.0).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (2, 6));
        assert!((r.p_value - 0.008).abs() < 1e-12);
    }

    #[test]
    fn anova_rejects_degenerate_input() {
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let r = one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.f_stat.is_infinite());
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn anova_affine_invariance() {
        let g = [
            vec![0.3, 1.7, 2.2, 0.9],
            vec![2.5, 3.1, 1.8],
            vec![4.0, 3.3, 5.1, 4.4],
        ];
        let base = one_way_anova(&g).unwrap();
        for (shift, scale) in [(10.0, 1.0), (0.0, -3.0), (-7.5, 0.25)] {
            let t: Vec<Vec<f64>> = g
                .iter()
                .map(|v| v.iter().map(|x| scale * x + shift).collect())
                .collect();
            let r = one_way_anova(&t).unwrap();
            assert!((r.f_stat - base.f_stat).abs() < 1e-9 * base.f_stat);
        }
    }

    #[test]
    fn chi_square_examples() {
        let t = Matrix::from_rows(&[[10.0, 10.0], [20.0, 20.0]]).unwrap();
        let r = chi_square_independence(&t).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);

        let t = Matrix::from_rows(&[[29.0, 23.0], [38.0, 12.0], [21.0, 19.0]]).unwrap();
        let r = chi_square_independence(&t).unwrap();
        assert_eq!(r.df, 2);
        assert!((0.02..=0.05).contains(&r.p_value), "p = {}", r.p_value);
        assert!((r.p_value - (-r.statistic / 2.0).exp()).abs() < 1e-10);

        let t = Matrix::from_rows(&[[0.0, 0.0], [1.0, 2.0]]).unwrap();
        assert!(chi_square_independence(&t).is_err());
    }

    fn cm(id: &str, v: &[[f64; 3]; 3]) -> ConnectivityMatrix {
        ConnectivityMatrix {
            subject_id: id.into(),
            values: Matrix::from_rows(v).unwrap(),
        }
    }

    #[test]
    fn screen_identical_matrices_is_empty_and_alpha_one_keeps_all() {
        let base = [[1.0, 0.2, 0.3], [0.2, 1.0, 0.4], [0.3, 0.4, 1.0]];
        let ms: Vec<_> = (0..6).map(|k| cm(&format!("s{k}"), &base)).collect();
        let labels = [
            ClassLabel::HC,
            ClassLabel::HC,
            ClassLabel::SZ,
            ClassLabel::SZ,
            ClassLabel::ADHD,
            ClassLabel::ADHD,
        ];
        assert!(edge_screen(&ms, &labels, 0.0005).unwrap().is_empty());
        assert_eq!(edge_screen(&ms, &labels, 1.0).unwrap().len(), 3);
        assert!(edge_screen(&ms[..5], &labels[..5], 0.5).is_err());
    }
}
