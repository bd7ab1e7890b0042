//! Classical comparison classifiers: k-nearest neighbours and a small MLP.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::optim::{argmax, History};
use crate::nn::{checkpoint, train_epochs, LayerSpec, Loss, Network, Target, Tensor, TrainConfig};
use crate::ovr;

/// Stored training set for brute-force Euclidean k-NN.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub features: Matrix,
    pub labels: Vec<ClassLabel>,
    pub k: usize,
}

pub const DEFAULT_K: usize = 3;

pub fn knn_fit(features: &Matrix, labels: &[ClassLabel], k: usize) -> Result<KnnModel> {
    if features.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} samples, {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if k == 0 || k > labels.len() {
        return Err(Error::invalid(format!(
            "k must lie in 1..={}, got {k}",
            labels.len()
        )));
    }
    Ok(KnnModel {
        features: features.clone(),
        labels: labels.to_vec(),
        k,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Majority label of the k nearest stored points (distance ties go to the lower
/// index). Vote ties go to the class with the smaller summed distance, then to
/// the lower class index.
pub fn knn_classify(model: &KnnModel, x: &[f64]) -> Result<ClassLabel> {
    if x.len() != model.features.cols() {
        return Err(Error::dim(format!(
            "model expects {} features, got {}",
            model.features.cols(),
            x.len()
        )));
    }
    // (distance, index), kept sorted; insertion keeps the earlier index on ties.
    let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(model.k + 1);
    for (i, row) in model.features.iter_rows().enumerate() {
        let d = euclidean(row, x);
        if nearest.len() == model.k && d >= nearest[model.k - 1].0 {
            continue;
        }
        let pos = nearest.partition_point(|&(nd, _)| nd <= d);
        nearest.insert(pos, (d, i));
        nearest.truncate(model.k);
    }
    let mut votes = [0usize; 3];
    let mut dist = [0.0; 3];
    for &(d, i) in &nearest {
        let c = model.labels[i].index();
        votes[c] += 1;
        dist[c] += d;
    }
    let mut best = 0;
    for c in 1..3 {
        if votes[c] > votes[best] || (votes[c] == votes[best] && dist[c] < dist[best]) {
            best = c;
        }
    }
    Ok(ClassLabel::from_index(best).expect("three classes"))
}

pub fn knn_classify_all(model: &KnnModel, x: &Matrix) -> Result<Vec<ClassLabel>> {
    x.iter_rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| knn_classify(model, row))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            train: TrainConfig::default(),
        }
    }
}

/// `d → hidden → hidden → 3` with ReLU activations and a softmax output.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub net: Network,
}

pub fn mlp_specs(inputs: usize, hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense {
            inputs,
            outputs: hidden,
        },
        LayerSpec::ReLU,
        LayerSpec::Dense {
            inputs: hidden,
            outputs: hidden,
        },
        LayerSpec::ReLU,
        LayerSpec::Dense {
            inputs: hidden,
            outputs: 3,
        },
        LayerSpec::Softmax,
    ]
}

impl MlpModel {
    pub fn new(inputs: usize, hidden: usize, seed: u64) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(Error::invalid("MLP layer widths must be positive"));
        }
        Ok(Self {
            net: Network::new((1, 1, inputs), &mlp_specs(inputs, hidden), seed)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_shape().2
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let out = self.net.forward(&Tensor::flat(x.to_vec()))?;
        let mut p = [0.0; 3];
        p.copy_from_slice(out.data());
        Ok(p)
    }

    pub fn classify(&self, x: &[f64]) -> Result<ClassLabel> {
        let p = self.predict_proba(x)?;
        Ok(ClassLabel::from_index(argmax(&p)).expect("three classes"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.net, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let net = checkpoint::load(path)?;
        let (h, w, d) = net.input_shape();
        let hidden = match net.layers().first().map(|l| &l.spec) {
            Some(LayerSpec::Dense { outputs, .. }) => *outputs,
            _ => 0,
        };
        let specs: Vec<LayerSpec> = net.layers().iter().map(|l| l.spec).collect();
        if (h, w) != (1, 1) || specs != mlp_specs(d, hidden) {
            return Err(Error::invalid(format!(
                "{} does not hold an MLP classifier",
                path.display()
            )));
        }
        Ok(Self { net })
    }
}

/// Cross-entropy training from a seeded initialization.
pub fn mlp_fit(
    features: &Matrix,
    labels: &[ClassLabel],
    config: &MlpConfig,
) -> Result<(MlpModel, History)> {
    if features.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} samples, {} labels",
            features.rows(),
            labels.len()
        )));
    }
    ovr::require_all_classes(labels)?;
    let mut model = MlpModel::new(features.cols(), config.hidden, config.train.seed)?;
    let inputs: Vec<Tensor> = features
        .iter_rows()
        .map(|r| Tensor::flat(r.to_vec()))
        .collect();
    let targets: Vec<Target> = labels.iter().map(|l| Target::Class(l.index())).collect();
    let history = train_epochs(
        &mut model.net,
        &inputs,
        &targets,
        Loss::CrossEntropy,
        &config.train,
    )?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn label(i: usize) -> ClassLabel {
        ClassLabel::from_index(i).unwrap()
    }

    #[test]
    fn knn_examples() {
        let one = knn_fit(
            &Matrix::from_rows(&[[0.0, 0.0]]).unwrap(),
            &[ClassLabel::ADHD],
            1,
        )
        .unwrap();
        assert_eq!(knn_classify(&one, &[5.0, -3.0]).unwrap(), ClassLabel::ADHD);
        assert!(knn_fit(&one.features, &one.labels, 2).is_err());

        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [10.0]]).unwrap();
        let y = [
            ClassLabel::SZ,
            ClassLabel::SZ,
            ClassLabel::HC,
            ClassLabel::HC,
        ];
        let m = knn_fit(&x, &y, 3).unwrap();
        assert_eq!(knn_classify(&m, &[0.5]).unwrap(), ClassLabel::SZ);

        // One vote each: the class whose neighbour is closest wins.
        let x = Matrix::from_rows(&[[0.0], [3.0], [-2.0]]).unwrap();
        let y = [ClassLabel::HC, ClassLabel::SZ, ClassLabel::ADHD];
        let m = knn_fit(&x, &y, 3).unwrap();
        assert_eq!(knn_classify(&m, &[1.6]).unwrap(), ClassLabel::SZ);
        assert_eq!(knn_classify(&m, &[0.5]).unwrap(), ClassLabel::HC);
    }

    fn oracle(x: &Matrix, y: &[ClassLabel], k: usize, q: &[f64]) -> ClassLabel {
        let mut all: Vec<(f64, usize)> = x.iter_rows().map(|r| euclidean(r, q)).zip(0..).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut score = [(0i64, 0.0f64); 3];
        for &(d, i) in &all[..k] {
            score[y[i].index()].0 += 1;
            score[y[i].index()].1 += d;
        }
        let best = (0..3)
            .min_by(|&a, &b| {
                score[b]
                    .0
                    .cmp(&score[a].0)
                    .then(score[a].1.total_cmp(&score[b].1))
                    .then(a.cmp(&b))
            })
            .unwrap();
        label(best)
    }

    proptest! {
        #[test]
        fn knn_matches_exhaustive_scan(seed in 0u64..100_000, k in 1usize..8) {
            let mut r = rng::seeded(seed);
            let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
            let y: Vec<ClassLabel> = (0..30).map(|_| label(r.random_range(0..3))).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let m = knn_fit(&x, &y, k).unwrap();
            let q = [r.random_range(-1.2..1.2), r.random_range(-1.2..1.2)];
            prop_assert_eq!(knn_classify(&m, &q).unwrap(), oracle(&x, &y, k, &q));
            prop_assert_eq!(knn_classify(&m, &rows[3]).unwrap(), oracle(&x, &y, k, &rows[3]));
        }

        #[test]
        fn duplicate_point_decides_k1(seed in 0u64..10_000, c in 0usize..3) {
            let mut r = rng::seeded(seed);
            let rows: Vec<Vec<f64>> = (0..20).map(|_| vec![r.random_range(-1.0..1.0); 3]).collect();
            let mut y: Vec<ClassLabel> = (0..20).map(|_| label(r.random_range(0..3))).collect();
            let q = vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let mut all = rows.clone();
            all.insert(0, q.clone());
            y.insert(0, label(c));
            let m = knn_fit(&Matrix::from_rows(&all).unwrap(), &y, 1).unwrap();
            prop_assert_eq!(knn_classify(&m, &q).unwrap(), label(c));
        }
    }

    fn blobs(seed: u64) -> (Matrix, Vec<ClassLabel>) {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..20 {
                let mut v: Vec<f64> = (0..6).map(|_| r.random_range(-0.5..0.5)).collect();
                v[c] += 4.0;
                rows.push(v);
                labels.push(label(c));
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    fn accuracy(m: &MlpModel, x: &Matrix, y: &[ClassLabel]) -> f64 {
        let ok = x
            .iter_rows()
            .zip(y)
            .filter(|(r, l)| m.classify(r).unwrap() == **l)
            .count();
        ok as f64 / y.len() as f64
    }

    #[test]
    fn mlp_separates_blobs_deterministically() {
        let (x, y) = blobs(1);
        let cfg = MlpConfig {
            hidden: 16,
            train: TrainConfig {
                epochs: 30,
                learning_rate: 1e-2,
                seed: 3,
                ..Default::default()
            },
        };
        let (a, _) = mlp_fit(&x, &y, &cfg).unwrap();
        assert!(accuracy(&a, &x, &y) >= 0.95);
        let (b, _) = mlp_fit(&x, &y, &cfg).unwrap();
        for row in x.iter_rows() {
            assert_eq!(a.predict_proba(row).unwrap(), b.predict_proba(row).unwrap());
        }
        let p = a.predict_proba(x.row(0)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlp.ckpt");
        a.save(&path).unwrap();
        let back = MlpModel::load(&path).unwrap();
        assert_eq!(back.net.flat_params(), a.net.flat_params());
    }

    #[test]
    fn mlp_zero_learning_rate_keeps_weights() {
        let (x, y) = blobs(2);
        let cfg = MlpConfig {
            hidden: 8,
            train: TrainConfig {
                epochs: 2,
                learning_rate: 0.0,
                seed: 5,
                ..Default::default()
            },
        };
        let (m, _) = mlp_fit(&x, &y, &cfg).unwrap();
        assert_eq!(
            m.net.flat_params(),
            MlpModel::new(6, 8, 5).unwrap().net.flat_params()
        );
    }
}
