//! ROI averaging, Pearson functional connectivity and heatmap export.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{read_series_csv, write_matrix_csv, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Voxel → ROI assignment. `None` marks background voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    labels: Vec<Option<usize>>,
}

impl LabelMap {
    pub fn new(labels: Vec<Option<usize>>, roi_count: usize) -> Result<Self> {
        let mut seen = vec![false; roi_count];
        for (v, l) in labels.iter().enumerate() {
            if let Some(r) = *l {
                if r >= roi_count {
                    return Err(Error::dim(format!(
                        "voxel {v} has roi {r} outside [0, {roi_count})"
                    )));
                }
                seen[r] = true;
            }
        }
        if let Some(r) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("roi {r} has no voxels")));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }
}

/// Averages voxel series (V × T) into ROI series (R × T).
pub fn roi_average(voxels: &Matrix, labels: &LabelMap, roi_count: usize) -> Result<Matrix> {
    if labels.len() != voxels.rows() {
        return Err(Error::dim(format!(
            "label map covers {} voxels, series has {}",
            labels.len(),
            voxels.rows()
        )));
    }
    let t = voxels.cols();
    let mut sums = Matrix::zeros(roi_count, t);
    let mut counts = vec![0usize; roi_count];
    for (v, l) in labels.labels().iter().enumerate() {
        let Some(r) = *l else { continue };
        if r >= roi_count {
            return Err(Error::dim(format!(
                "voxel {v} labeled {r} >= roi_count {roi_count}"
            )));
        }
        counts[r] += 1;
        for (acc, x) in sums.row_mut(r).iter_mut().zip(voxels.row(v)) {
            *acc += x;
        }
    }
    for (r, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::invalid(format!("roi {r} has zero voxels")));
        }
        let inv = c as f64;
        for x in sums.row_mut(r) {
            *x /= inv;
        }
    }
    Ok(sums)
}

/// A Pearson coefficient together with a flag set when either series was constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub r: f64,
    pub zero_variance: bool,
}

/// Sample Pearson correlation via the centered two-pass formula.
///
/// A constant series yields `r = 0` with `zero_variance` set.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "series lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 samples"));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Pearson {
            r: 0.0,
            zero_variance: true,
        });
    }
    Ok(Pearson {
        r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        zero_variance: false,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Symmetric R × R Pearson matrix for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    pub subject_id: String,
    pub values: Matrix,
}

impl ConnectivityMatrix {
    pub fn size(&self) -> usize {
        self.values.rows()
    }

    /// Upper-triangle entries (i < j), row by row. Length R(R-1)/2.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.size();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.values.row(i)[i + 1..]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_matrix_csv(path, &self.values)
    }

    pub fn read_csv(path: &Path, subject_id: impl Into<String>) -> Result<Self> {
        let values = read_series_csv(path)?;
        if values.rows() != values.cols() {
            return Err(Error::dim(format!(
                "{}: connectivity matrix is {}x{}",
                path.display(),
                values.rows(),
                values.cols()
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            values,
        })
    }
}

/// Computes the connectivity matrix of one subject. Constant ROI series get a
/// zero row/column (including the diagonal) and a warning.
pub fn connectivity_matrix(record: &SubjectRecord) -> Result<ConnectivityMatrix> {
    let s = &record.series;
    let n = s.rows();
    let mut values = Matrix::zeros(n, n);
    let mut flat = 0usize;
    // Center each row once; every pair then reduces to a dot product.
    let mut centered = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for row in s.iter_rows() {
        let m = mean(row);
        let c: Vec<f64> = row.iter().map(|v| v - m).collect();
        norms.push(c.iter().map(|v| v * v).sum::<f64>().sqrt());
        centered.push(c);
    }
    for i in 0..n {
        if norms[i] == 0.0 {
            flat += 1;
            continue;
        }
        values.set(i, i, 1.0);
        for j in i + 1..n {
            if norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values.set(i, j, r);
            values.set(j, i, r);
        }
    }
    if flat > 0 {
        log::warn!(
            "subject {}: {flat} constant ROI series, their correlations set to 0",
            record.id
        );
    }
    Ok(ConnectivityMatrix {
        subject_id: record.id.clone(),
        values,
    })
}

/// Connectivity matrices for a whole dataset, computed in parallel, in input order.
pub fn connectivity_matrices(records: &[SubjectRecord]) -> Result<Vec<ConnectivityMatrix>> {
    records.par_iter().map(connectivity_matrix).collect()
}

/// Diverging colormap: -1 → blue, 0 → white, +1 → red. Values are clamped.
pub fn diverging_rgb(v: f64) -> [u8; 3] {
    let v = if v.is_finite() {
        v.clamp(-1.0, 1.0)
    } else {
        0.0
    };
    if v >= 0.0 {
        let c = (255.0 * (1.0 - v)).round() as u8;
        [255, c, c]
    } else {
        let c = (255.0 * (1.0 + v)).round() as u8;
        [c, c, 255]
    }
}

/// Writes a binary PPM (P6) with one pixel per matrix cell.
pub fn write_ppm(path: &Path, m: &Matrix, color: impl Fn(f64) -> [u8; 3]) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", m.cols(), m.rows()).into_bytes();
    bytes.reserve(m.rows() * m.cols() * 3);
    for row in m.iter_rows() {
        for &v in row {
            bytes.extend_from_slice(&color(v));
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn export_heatmap(matrix: &ConnectivityMatrix, path: &Path) -> Result<()> {
    write_ppm(path, &matrix.values, diverging_rgb)
}
