//! Feature extraction for the classifiers: CNN-AE bottleneck features or the raw
//! connectivity upper triangle, with optional z-scoring.

use serde::{Deserialize, Serialize};

use crate::cnn_ae::{
    build_autoencoder, finetune_classifier, train_reconstruction, FineTunedEncoder,
    DEFAULT_INPUT_SIZE,
};
use crate::connectivity::ConnectivityMatrix;
use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::TrainConfig;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    #[default]
    CnnAe,
    /// The R(R-1)/2 upper-triangle correlations, no learned extractor.
    RawUpperTriangle,
}

/// Which subjects the extractor is fitted on during cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// Once on every subject (test folds included).
    All,
    /// Separately on each training split.
    #[default]
    Fold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub source: FeatureSource,
    pub fit_scope: FitScope,
    /// z-score every feature with statistics of the fitting subjects.
    pub standardize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            source: FeatureSource::CnnAe,
            fit_scope: FitScope::Fold,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    pub input_size: usize,
    pub seed: u64,
    /// Reconstruction training; zero epochs skips it.
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub freeze_encoder: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            input_size: DEFAULT_INPUT_SIZE,
            seed: 0,
            pretrain: TrainConfig {
                epochs: 20,
                ..Default::default()
            },
            finetune: TrainConfig {
                epochs: 20,
                ..Default::default()
            },
            freeze_encoder: false,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        crate::cnn_ae::autoencoder_specs(self.input_size)?;
        if self.pretrain.epochs > 0 {
            self.pretrain.validate()?;
        }
        self.finetune.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExtractor {
    RawUpperTriangle,
    CnnAe(FineTunedEncoder),
}

fn subset<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

impl FeatureExtractor {
    /// Fits the extractor on the subjects in `idx` only.
    pub fn fit(
        source: FeatureSource,
        matrices: &[ConnectivityMatrix],
        labels: &[ClassLabel],
        idx: &[usize],
        config: &AutoencoderConfig,
        seed: u64,
    ) -> Result<Self> {
        if matrices.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} matrices, {} labels",
                matrices.len(),
                labels.len()
            )));
        }
        match source {
            FeatureSource::RawUpperTriangle => Ok(Self::RawUpperTriangle),
            FeatureSource::CnnAe => {
                let s = config.seed ^ seed;
                let mats = subset(matrices, idx);
                let labs = subset(labels, idx);
                let mut ae = build_autoencoder(config.input_size, rng::derive_seed(s, 0))?;
                if config.pretrain.epochs > 0 {
                    let cfg = TrainConfig {
                        seed: rng::derive_seed(s, 1),
                        ..config.pretrain.clone()
                    };
                    let h = train_reconstruction(&mut ae, &mats, &cfg)?;
                    log::info!("autoencoder reconstruction loss {:?}", h.loss.last());
                }
                let cfg = TrainConfig {
                    seed: rng::derive_seed(s, 2),
                    ..config.finetune.clone()
                };
                let (enc, h) = finetune_classifier(&ae, &mats, &labs, &cfg, config.freeze_encoder)?;
                log::info!(
                    "fine-tune loss {:?}, accuracy {:?}",
                    h.loss.last(),
                    h.accuracy.last()
                );
                Ok(Self::CnnAe(enc))
            }
        }
    }

    /// Feature rows for the subjects in `idx`, in that order.
    pub fn transform(&self, matrices: &[ConnectivityMatrix], idx: &[usize]) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = match self {
            Self::RawUpperTriangle => idx.iter().map(|&i| matrices[i].upper_triangle()).collect(),
            Self::CnnAe(enc) => {
                let mats = subset(matrices, idx);
                let labels = vec![ClassLabel::HC; mats.len()];
                crate::cnn_ae::extract_features(enc, &mats, &labels)?
                    .into_iter()
                    .map(|f| f.values)
                    .collect()
            }
        };
        if rows.is_empty() {
            return Err(Error::invalid("no subjects to transform"));
        }
        Matrix::from_rows(&rows)
    }
}

/// Column-wise z-scoring; constant columns are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| (s / n).sqrt())
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::dim(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mats() -> Vec<ConnectivityMatrix> {
        (0..4)
            .map(|k| {
                let mut m = Matrix::zeros(3, 3);
                for i in 0..3 {
                    m.set(i, i, 1.0);
                }
                let v = 0.1 * k as f64;
                m.set(0, 1, v);
                m.set(1, 0, v);
                ConnectivityMatrix {
                    subject_id: format!("s{k}"),
                    values: m,
                }
            })
            .collect()
    }

    #[test]
    fn raw_upper_triangle_rows() {
        let m = mats();
        let labels = vec![ClassLabel::HC; 4];
        let e = FeatureExtractor::fit(
            FeatureSource::RawUpperTriangle,
            &m,
            &labels,
            &[0, 1],
            &AutoencoderConfig::default(),
            0,
        )
        .unwrap();
        let x = e.transform(&m, &[3, 1]).unwrap();
        assert_eq!((x.rows(), x.cols()), (2, 3));
        assert_eq!(x.row(0), &[0.30000000000000004, 0.0, 0.0]);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x);
        let z = s.apply(&x).unwrap();
        assert_eq!(z.row(0), &[-1.0, 0.0]);
        assert_eq!(z.row(1), &[1.0, 0.0]);
        assert!(s.apply(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn config_tables_use_defaults() {
        let c: AutoencoderConfig =
            toml::from_str("input_size = 16\n[pretrain]\nepochs = 2\n").unwrap();
        assert_eq!(c.pretrain.epochs, 2);
        assert_eq!(c.pretrain.learning_rate, 1e-3);
        assert_eq!(c.finetune.epochs, 20);
        assert!(toml::from_str::<FeatureConfig>("sorce = \"cnn_ae\"").is_err());
        let f: FeatureConfig =
            toml::from_str("source = \"raw_upper_triangle\"\nfit_scope = \"all\"").unwrap();
        assert_eq!(
            (f.source, f.fit_scope),
            (FeatureSource::RawUpperTriangle, FitScope::All)
        );
    }
}
