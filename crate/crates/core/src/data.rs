//! Subjects, dataset manifests, series files and the synthetic generator.
//!
//! A series file is plain CSV with one row per ROI and one column per timepoint,
//! no header. A manifest is a TOML document:
//!
//! ```toml
//! roi_count = 118
//! seed = 7            # optional, informational
//!
//! [[subject]]
//! id = "sub-001"
//! label = "SZ"        # HC | SZ | ADHD
//! path = "series/sub-001.csv"   # relative to the manifest
//! age = 31.0          # optional pass-through
//! sex = "M"           # optional pass-through
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Diagnostic group. The integer encoding is stable: HC=0, SZ=1, ADHD=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    HC,
    SZ,
    ADHD,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::HC, ClassLabel::SZ, ClassLabel::ADHD];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::HC => "HC",
            ClassLabel::SZ => "SZ",
            ClassLabel::ADHD => "ADHD",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HC" | "0" => Ok(ClassLabel::HC),
            "SZ" | "1" => Ok(ClassLabel::SZ),
            "ADHD" | "2" => Ok(ClassLabel::ADHD),
            other => Err(Error::invalid(format!("unknown class label `{other}`"))),
        }
    }
}

/// Optional demographic columns carried through from the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: Option<f64>,
    pub sex: Option<String>,
}

/// One subject's ROI × time series and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub label: ClassLabel,
    pub series: Matrix,
    pub demographics: Demographics,
}

impl SubjectRecord {
    /// Validates the per-record invariants: at least one ROI, at least three
    /// timepoints, all values finite. The `R >= 2` requirement is a dataset-level
    /// check (see [`validate_dataset`]).
    pub fn new(id: impl Into<String>, label: ClassLabel, series: Matrix) -> Result<Self> {
        let id = id.into();
        if series.rows() < 1 {
            return Err(Error::Subject {
                subject: id,
                msg: "series has no ROI rows".into(),
            });
        }
        if series.cols() < 3 {
            return Err(Error::Subject {
                subject: id,
                msg: format!("series has {} timepoints, need at least 3", series.cols()),
            });
        }
        if let Some(pos) = series.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Subject {
                subject: id,
                msg: format!(
                    "non-finite value at roi {}, timepoint {}",
                    pos / series.cols(),
                    pos % series.cols()
                ),
            });
        }
        Ok(Self {
            id,
            label,
            series,
            demographics: Demographics::default(),
        })
    }

    pub fn roi_count(&self) -> usize {
        self.series.rows()
    }

    pub fn timepoints(&self) -> usize {
        self.series.cols()
    }
}

/// Checks the dataset-wide invariants: unique ids, a shared ROI count of at least 2.
pub fn validate_dataset(records: &[SubjectRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    let roi_count = records.first().map(|r| r.roi_count());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Subject {
                subject: r.id.clone(),
                msg: "duplicate subject id".into(),
            });
        }
        if r.roi_count() < 2 {
            return Err(Error::Subject {
                subject: r.id.clone(),
                msg: "a dataset needs at least 2 ROIs".into(),
            });
        }
        if Some(r.roi_count()) != roi_count {
            return Err(Error::Subject {
                subject: r.id.clone(),
                msg: format!(
                    "has {} ROIs but the dataset has {}",
                    r.roi_count(),
                    roi_count.unwrap_or(0)
                ),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: ClassLabel,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub roi_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, rename = "subject")]
    pub subjects: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        if manifest.roi_count == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: "roi_count must be positive".into(),
            });
        }
        let mut ids = HashSet::new();
        for s in &manifest.subjects {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Subject {
                    subject: s.id.clone(),
                    msg: format!("duplicate subject id in {}", path.display()),
                });
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Loads every subject listed in the manifest, in manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<SubjectRecord>> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::with_capacity(manifest.subjects.len());
    for entry in &manifest.subjects {
        let path = base.join(&entry.path);
        let series = read_series_csv(&path).map_err(|e| Error::Subject {
            subject: entry.id.clone(),
            msg: e.to_string(),
        })?;
        if series.rows() != manifest.roi_count {
            return Err(Error::Subject {
                subject: entry.id.clone(),
                msg: format!(
                    "{} has {} ROI rows but roi_count = {}",
                    path.display(),
                    series.rows(),
                    manifest.roi_count
                ),
            });
        }
        let mut rec = SubjectRecord::new(entry.id.clone(), entry.label, series)?;
        rec.demographics = Demographics {
            age: entry.age,
            sex: entry.sex.clone(),
        };
        out.push(rec);
    }
    validate_dataset(&out)?;
    Ok(out)
}

/// Writes `series/<id>.csv` files plus `manifest.toml` under `dir`; returns the manifest path.
pub fn save_dataset(records: &[SubjectRecord], dir: &Path, seed: Option<u64>) -> Result<PathBuf> {
    validate_dataset(records)?;
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;
    let mut subjects = Vec::with_capacity(records.len());
    for r in records {
        let rel = PathBuf::from("series").join(format!("{}.csv", r.id));
        write_matrix_csv(&dir.join(&rel), &r.series)?;
        subjects.push(ManifestEntry {
            id: r.id.clone(),
            label: r.label,
            path: rel,
            age: r.demographics.age,
            sex: r.demographics.sex.clone(),
        });
    }
    let manifest = DatasetManifest {
        roi_count: records.first().map_or(0, |r| r.roi_count()),
        seed,
        subjects,
    };
    let path = dir.join("manifest.toml");
    manifest.write(&path)?;
    Ok(path)
}

/// Formats a value as the shortest round-tripping scientific literal.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Writes a headerless numeric CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut text = String::with_capacity(m.rows() * m.cols() * 12);
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                text.push(',');
            }
            text.push_str(&fmt_f64(*v));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a headerless numeric CSV. Errors carry `path:line` and the column.
pub fn read_series_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("column {}: `{}` is not a number", col + 1, field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("column {}: non-finite value", col + 1),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("{} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

/// A set of ROIs sharing one latent signal, with the target pairwise correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub rois: Vec<usize>,
    pub target: f64,
}

impl Block {
    pub fn range(start: usize, end: usize, target: f64) -> Self {
        Self {
            rois: (start..end).collect(),
            target,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassBlocks {
    #[serde(rename = "HC", default)]
    pub hc: Vec<Block>,
    #[serde(rename = "SZ", default)]
    pub sz: Vec<Block>,
    #[serde(rename = "ADHD", default)]
    pub adhd: Vec<Block>,
}

impl ClassBlocks {
    pub fn for_class(&self, label: ClassLabel) -> &[Block] {
        match label {
            ClassLabel::HC => &self.hc,
            ClassLabel::SZ => &self.sz,
            ClassLabel::ADHD => &self.adhd,
        }
    }
}

fn default_roi_count() -> usize {
    118
}

fn default_timepoints() -> usize {
    142
}

/// Parameters of the latent-block synthetic generator.
///
/// Within a class block every ROI emits `α·z(t) + σ·ε(t)` with `z, ε ~ N(0, 1)`
/// and `α² / (α² + σ²) = |target|`, so the population correlation between two
/// ROIs of a block equals the target. Negative targets alternate the sign of `α`
/// along the block, which makes neighbouring members anticorrelated. ROIs outside
/// every block are pure noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_per_class: [usize; 3],
    #[serde(default = "default_roi_count")]
    pub roi_count: usize,
    #[serde(default = "default_timepoints")]
    pub timepoints: usize,
    #[serde(default)]
    pub class_blocks: ClassBlocks,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The 60/58/45 three-class demo with one disjoint block per class plus a
    /// block shared by all classes.
    pub fn demo(seed: u64) -> Self {
        let shared = Block::range(100, 112, 0.5);
        Self {
            n_per_class: [60, 58, 45],
            roi_count: 118,
            timepoints: 142,
            class_blocks: ClassBlocks {
                hc: vec![Block::range(0, 20, 0.7), shared.clone()],
                sz: vec![Block::range(35, 55, 0.7), shared.clone()],
                adhd: vec![Block::range(70, 90, 0.7), shared],
            },
            noise_sigma: 1.0,
            seed,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.roi_count < 2 {
            return Err(Error::invalid("roi_count must be at least 2"));
        }
        if self.timepoints < 3 {
            return Err(Error::invalid("timepoints must be at least 3"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be positive"));
        }
        for label in ClassLabel::ALL {
            let mut used = HashSet::new();
            for (b, block) in self.class_blocks.for_class(label).iter().enumerate() {
                if !(block.target > -1.0 && block.target < 1.0) {
                    return Err(Error::invalid(format!(
                        "{label} block {b}: target {} outside (-1, 1)",
                        block.target
                    )));
                }
                for &roi in &block.rois {
                    if roi >= self.roi_count {
                        return Err(Error::invalid(format!(
                            "{label} block {b}: roi {roi} >= roi_count {}",
                            self.roi_count
                        )));
                    }
                    if !used.insert(roi) {
                        return Err(Error::invalid(format!(
                            "{label} block {b}: roi {roi} appears in more than one block"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates subjects class by class (HC, SZ, ADHD), ids `hc_000`, `sz_000`, ...
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SubjectRecord>> {
    spec.validate()?;
    let sigma = spec.noise_sigma;
    let t_len = spec.timepoints;
    let mut out = Vec::with_capacity(spec.n_per_class.iter().sum());
    let mut subject_no = 0u64;
    for label in ClassLabel::ALL {
        let blocks = spec.class_blocks.for_class(label);
        // (block index, signed loading) per ROI.
        let mut loading: Vec<Option<(usize, f64)>> = vec![None; spec.roi_count];
        for (b, block) in blocks.iter().enumerate() {
            let r = block.target.abs();
            let alpha = sigma * (r / (1.0 - r)).sqrt();
            for (k, &roi) in block.rois.iter().enumerate() {
                let sign = if block.target < 0.0 && k % 2 == 1 {
                    -1.0
                } else {
                    1.0
                };
                loading[roi] = Some((b, sign * alpha));
            }
        }
        for n in 0..spec.n_per_class[label.index()] {
            let mut rng = rng::seeded(rng::derive_seed(spec.seed, subject_no));
            subject_no += 1;
            let mut latent = vec![0.0; blocks.len() * t_len];
            for z in latent.iter_mut() {
                *z = StandardNormal.sample(&mut rng);
            }
            let mut series = Matrix::zeros(spec.roi_count, t_len);
            for (roi, load) in loading.iter().enumerate() {
                let row = series.row_mut(roi);
                for (t, v) in row.iter_mut().enumerate() {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    *v = sigma * noise
                        + load.map_or(0.0, |(b, alpha)| alpha * latent[b * t_len + t]);
                }
            }
            let id = format!("{}_{n:03}", label.as_str().to_ascii_lowercase());
            out.push(SubjectRecord::new(id, label, series)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_per_class: [2, 1, 3],
            roi_count: 6,
            timepoints: 20,
            class_blocks: ClassBlocks {
                hc: vec![Block::range(0, 3, 0.8)],
                sz: vec![Block::range(2, 5, 0.5)],
                adhd: vec![],
            },
            noise_sigma: 0.5,
            seed: 11,
        }
    }

    #[test]
    fn label_encoding_is_stable() {
        assert_eq!(ClassLabel::HC.index(), 0);
        assert_eq!(ClassLabel::SZ.index(), 1);
        assert_eq!(ClassLabel::ADHD.index(), 2);
        assert_eq!("adhd".parse::<ClassLabel>().unwrap(), ClassLabel::ADHD);
        assert!("BD".parse::<ClassLabel>().is_err());
    }

    #[test]
    fn empty_spec_generates_nothing() {
        let mut spec = small_spec();
        spec.n_per_class = [0, 0, 0];
        assert!(generate_synthetic(&spec).unwrap().is_empty());
    }

    #[test]
    fn generation_is_deterministic_and_counts_match() {
        let spec = small_spec();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let counts = ClassLabel::ALL.map(|l| a.iter().filter(|r| r.label == l).count());
        assert_eq!(counts, [2, 1, 3]);
        let mut other = spec.clone();
        other.seed = 12;
        assert_ne!(generate_synthetic(&other).unwrap()[0].series, a[0].series);
    }

    #[test]
    fn block_pair_reaches_target_correlation() {
        let spec = SyntheticSpec {
            n_per_class: [1, 0, 0],
            roi_count: 3,
            timepoints: 5000,
            class_blocks: ClassBlocks {
                hc: vec![Block::range(0, 2, 0.9)],
                ..Default::default()
            },
            noise_sigma: 0.1,
            seed: 3,
        };
        let recs = generate_synthetic(&spec).unwrap();
        let s = &recs[0].series;
        let r = pearson_oracle(s.row(0), s.row(1));
        assert!((r - 0.9).abs() < 0.05, "r = {r}");
        let off = pearson_oracle(s.row(0), s.row(2));
        assert!(off.abs() < 0.05, "off-block r = {off}");
    }

    #[test]
    fn negative_target_pair_is_anticorrelated() {
        let spec = SyntheticSpec {
            n_per_class: [1, 0, 0],
            roi_count: 2,
            timepoints: 5000,
            class_blocks: ClassBlocks {
                hc: vec![Block::range(0, 2, -0.6)],
                ..Default::default()
            },
            noise_sigma: 1.0,
            seed: 5,
        };
        let s = &generate_synthetic(&spec).unwrap()[0].series;
        let r = pearson_oracle(s.row(0), s.row(1));
        assert!((r + 0.6).abs() < 0.05, "r = {r}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = small_spec();
        spec.class_blocks.hc.push(Block::range(1, 2, 0.3));
        assert!(generate_synthetic(&spec).is_err(), "overlapping blocks");
        let mut spec = small_spec();
        spec.class_blocks.hc[0].target = 1.0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.class_blocks.sz[0].rois.push(6);
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.noise_sigma = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn empty_manifest_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        fs::write(&path, "roi_count = 118\n").unwrap();
        assert!(load_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn single_subject_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            n_per_class: [0, 1, 0],
            roi_count: 118,
            timepoints: 142,
            class_blocks: ClassBlocks::default(),
            noise_sigma: 1.0,
            seed: 1,
        };
        let recs = generate_synthetic(&spec).unwrap();
        let manifest = save_dataset(&recs, dir.path(), Some(1)).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].label, ClassLabel::SZ);
        assert_eq!((back[0].roi_count(), back[0].timepoints()), (118, 142));
        assert_eq!(back[0].series, recs[0].series);

        let first = fs::read(dir.path().join("series/sz_000.csv")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        save_dataset(&back, dir2.path(), Some(1)).unwrap();
        let second = fs::read(dir2.path().join("series/sz_000.csv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn row_count_mismatch_names_subject() {
        let dir = tempfile::tempdir().unwrap();
        let series = Matrix::zeros(117, 5);
        write_matrix_csv(&dir.path().join("a.csv"), &series).unwrap();
        fs::write(
            dir.path().join("m.toml"),
            "roi_count = 118\n[[subject]]\nid = \"subj-7\"\nlabel = \"SZ\"\npath = \"a.csv\"\n",
        )
        .unwrap();
        let err = load_dataset(&dir.path().join("m.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("subj-7") && err.contains("117"), "{err}");
    }

    #[test]
    fn loader_errors_carry_location() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "1,2,3\n4,x,6\n").unwrap();
        fs::write(dir.path().join("b.csv"), "1,2,3\n4,NaN,6\n").unwrap();
        let manifest = |file: &str| {
            format!("roi_count = 2\n[[subject]]\nid = \"s1\"\nlabel = \"HC\"\npath = \"{file}\"\n")
        };
        fs::write(dir.path().join("m.toml"), manifest("a.csv")).unwrap();
        let err = load_dataset(&dir.path().join("m.toml"))
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("s1") && err.contains(":2") && err.contains("column 2"),
            "{err}"
        );

        fs::write(dir.path().join("m.toml"), manifest("b.csv")).unwrap();
        let err = load_dataset(&dir.path().join("m.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("non-finite"), "{err}");

        fs::write(dir.path().join("m.toml"), manifest("missing.csv")).unwrap();
        let err = load_dataset(&dir.path().join("m.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("s1") && err.contains("missing.csv"), "{err}");

        fs::write(
            dir.path().join("m.toml"),
            format!(
                "{}[[subject]]\nid = \"s1\"\nlabel = \"SZ\"\npath = \"a.csv\"\n",
                manifest("a.csv")
            ),
        )
        .unwrap();
        let err = load_dataset(&dir.path().join("m.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate"), "{err}");
    }
}
