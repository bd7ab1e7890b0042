//! The convolutional autoencoder, its fine-tuned encoder classifier, and
//! bottleneck feature extraction.
//!
//! Layer stack for input `n` (118 by default, shapes in parentheses):
//!
//! ```text
//! encoder  Conv(1→32) ReLU (118)  Pool (59)  Conv(32→32) ReLU  Pool (30)  Conv(32→1) ReLU  Pool (15)
//! decoder  Conv(1→1) ReLU  Up (30)  Conv(1→32) ReLU  Up (60)  Conv(32→32) ReLU  Up (120)
//!          CenterCrop (118)  Conv(32→1) Tanh
//! ```
//!
//! Features are the flattened bottleneck after the last encoder pool (15·15 = 225
//! values at n = 118).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::ConnectivityMatrix;
use crate::data::{fmt_f64, ClassLabel};
use crate::error::{Error, Result};
use crate::nn::optim::History;
use crate::nn::{checkpoint, train_epochs, LayerSpec, Loss, Network, Target, Tensor, TrainConfig};
use crate::rng;

pub const DEFAULT_INPUT_SIZE: usize = 118;
/// Number of layers (conv, relu, pool) × 3 making up the encoder.
pub const ENCODER_LAYERS: usize = 9;

fn bottleneck_side(n: usize) -> usize {
    n.div_ceil(2).div_ceil(2).div_ceil(2)
}

pub fn encoder_specs() -> Vec<LayerSpec> {
    use LayerSpec::*;
    vec![
        Conv2D { c_in: 1, c_out: 32 },
        ReLU,
        MaxPool2x2,
        Conv2D {
            c_in: 32,
            c_out: 32,
        },
        ReLU,
        MaxPool2x2,
        Conv2D { c_in: 32, c_out: 1 },
        ReLU,
        MaxPool2x2,
    ]
}

pub fn autoencoder_specs(input_size: usize) -> Result<Vec<LayerSpec>> {
    use LayerSpec::*;
    if input_size < 8 {
        return Err(Error::invalid(format!(
            "autoencoder input {input_size} is too small for three poolings (need ≥ 8)"
        )));
    }
    let mut specs = encoder_specs();
    specs.extend([
        Conv2D { c_in: 1, c_out: 1 },
        ReLU,
        UpsampleNearest2x,
        Conv2D { c_in: 1, c_out: 32 },
        ReLU,
        UpsampleNearest2x,
        Conv2D {
            c_in: 32,
            c_out: 32,
        },
        ReLU,
        UpsampleNearest2x,
        CenterCrop { size: input_size },
        Conv2D { c_in: 32, c_out: 1 },
        Tanh,
    ]);
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub net: Network,
}

pub fn build_autoencoder(input_size: usize, seed: u64) -> Result<AutoencoderModel> {
    let specs = autoencoder_specs(input_size)?;
    Ok(AutoencoderModel {
        net: Network::new((input_size, input_size, 1), &specs, seed)?,
    })
}

impl AutoencoderModel {
    pub fn input_size(&self) -> usize {
        self.net.input_shape().0
    }

    pub fn bottleneck_len(&self) -> usize {
        bottleneck_side(self.input_size()).pow(2)
    }

    pub fn reconstruct(&self, m: &ConnectivityMatrix) -> Result<Tensor> {
        self.net.forward(&self.input_tensor(m)?)
    }

    fn input_tensor(&self, m: &ConnectivityMatrix) -> Result<Tensor> {
        matrix_tensor(m, self.input_size())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.net, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let net = checkpoint::load(path)?;
        let (n, _, _) = net.input_shape();
        let expected = autoencoder_specs(n)?;
        if net.layers().iter().map(|l| l.spec).ne(expected) {
            return Err(Error::invalid(format!(
                "{} is not an autoencoder checkpoint",
                path.display()
            )));
        }
        Ok(Self { net })
    }
}

/// A connectivity matrix as a single-channel image.
pub fn matrix_tensor(m: &ConnectivityMatrix, input_size: usize) -> Result<Tensor> {
    if m.size() != input_size {
        return Err(Error::Subject {
            subject: m.subject_id.clone(),
            msg: format!(
                "matrix is {0}x{0}, model expects {input_size}x{input_size}",
                m.size()
            ),
        });
    }
    Tensor::from_vec(input_size, input_size, 1, m.values.as_slice().to_vec())
}

/// Trains the autoencoder to reproduce its input under mean squared error.
pub fn train_reconstruction(
    model: &mut AutoencoderModel,
    matrices: &[ConnectivityMatrix],
    config: &TrainConfig,
) -> Result<History> {
    let inputs: Vec<Tensor> = matrices
        .iter()
        .map(|m| model.input_tensor(m))
        .collect::<Result<_>>()?;
    let targets: Vec<Target> = inputs.iter().cloned().map(Target::Tensor).collect();
    train_epochs(&mut model.net, &inputs, &targets, Loss::Mse, config)
}

/// Encoder followed by Dense(bottleneck → 3) and Softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTunedEncoder {
    pub net: Network,
}

impl FineTunedEncoder {
    /// Copies the encoder of `model` and attaches a freshly initialized head.
    pub fn from_autoencoder(model: &AutoencoderModel, seed: u64) -> Result<Self> {
        let n = model.input_size();
        let b = model.bottleneck_len();
        let head_specs = [
            LayerSpec::Dense {
                inputs: b,
                outputs: ClassLabel::COUNT,
            },
            LayerSpec::Softmax,
        ];
        let head = Network::new((1, 1, b), &head_specs, seed)?;
        let mut layers: Vec<_> = model.net.layers()[..ENCODER_LAYERS].to_vec();
        layers.extend(head.into_layers());
        Ok(Self {
            net: Network::from_layers((n, n, 1), layers)?,
        })
    }

    pub fn input_size(&self) -> usize {
        self.net.input_shape().0
    }

    /// Class probabilities for one matrix.
    pub fn predict_proba(&self, m: &ConnectivityMatrix) -> Result<Vec<f64>> {
        Ok(self
            .net
            .forward(&matrix_tensor(m, self.input_size())?)?
            .into_vec())
    }

    /// Flattened bottleneck (row-major) for one matrix.
    pub fn features(&self, m: &ConnectivityMatrix) -> Result<Vec<f64>> {
        let x = matrix_tensor(m, self.input_size())?;
        Ok(self.net.forward_until(&x, ENCODER_LAYERS)?.into_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.net, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let net = checkpoint::load(path)?;
        let specs: Vec<_> = net.layers().iter().map(|l| l.spec).collect();
        let ok = specs.len() == ENCODER_LAYERS + 2
            && specs[..ENCODER_LAYERS] == encoder_specs()[..]
            && matches!(specs[ENCODER_LAYERS], LayerSpec::Dense { outputs: 3, .. })
            && specs[ENCODER_LAYERS + 1] == LayerSpec::Softmax;
        if !ok {
            return Err(Error::invalid(format!(
                "{} is not a fine-tuned encoder checkpoint",
                path.display()
            )));
        }
        Ok(Self { net })
    }
}

/// Fine-tunes the encoder with a softmax head under cross-entropy.
///
/// The decoder is dropped. With `freeze_encoder` only the head is trained.
/// Returns the classifier and its per-epoch history (accuracy of the
/// pre-update predictions).
pub fn finetune_classifier(
    model: &AutoencoderModel,
    matrices: &[ConnectivityMatrix],
    labels: &[ClassLabel],
    config: &TrainConfig,
    freeze_encoder: bool,
) -> Result<(FineTunedEncoder, History)> {
    if matrices.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} matrices, {} labels",
            matrices.len(),
            labels.len()
        )));
    }
    for c in ClassLabel::ALL {
        if !labels.contains(&c) {
            return Err(Error::invalid(format!("class {c} has no samples")));
        }
    }
    let mut enc = FineTunedEncoder::from_autoencoder(model, rng::derive_seed(config.seed, 1))?;
    if freeze_encoder {
        enc.net.frozen_prefix = ENCODER_LAYERS;
    }
    let n = enc.input_size();
    let inputs: Vec<Tensor> = matrices
        .iter()
        .map(|m| matrix_tensor(m, n))
        .collect::<Result<_>>()?;
    let targets: Vec<Target> = labels.iter().map(|l| Target::Class(l.index())).collect();
    let history = train_epochs(&mut enc.net, &inputs, &targets, Loss::CrossEntropy, config)?;
    enc.net.frozen_prefix = 0;
    Ok((enc, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub subject_id: String,
    pub label: ClassLabel,
    pub values: Vec<f64>,
}

pub fn extract_features(
    encoder: &FineTunedEncoder,
    matrices: &[ConnectivityMatrix],
    labels: &[ClassLabel],
) -> Result<Vec<FeatureVector>> {
    if matrices.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} matrices, {} labels",
            matrices.len(),
            labels.len()
        )));
    }
    matrices
        .par_iter()
        .zip(labels)
        .map(|(m, &label)| {
            let values = encoder.features(m)?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Subject {
                    subject: m.subject_id.clone(),
                    msg: "non-finite feature".into(),
                });
            }
            Ok(FeatureVector {
                subject_id: m.subject_id.clone(),
                label,
                values,
            })
        })
        .collect()
}

/// Writes `subject_id,label,f0,f1,...` rows with a header line.
pub fn write_features_csv(path: &Path, features: &[FeatureVector]) -> Result<()> {
    let mut out = String::new();
    let d = features.first().map_or(0, |f| f.values.len());
    out.push_str("subject_id,label");
    for j in 0..d {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for f in features {
        out.push_str(&f.subject_id);
        out.push(',');
        out.push_str(f.label.as_str());
        for v in &f.values {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let d = header.split(',').count().saturating_sub(2);
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().to_string();
        let label: ClassLabel = fields
            .next()
            .ok_or_else(|| parse_err(i + 1, "missing label".into()))?
            .parse()
            .map_err(|e: Error| parse_err(i + 1, e.to_string()))?;
        let values: Vec<f64> = fields
            .enumerate()
            .map(|(j, s)| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(i + 1, format!("column {}: {e}", j + 3)))
            })
            .collect::<Result<_>>()?;
        if values.len() != d {
            return Err(parse_err(
                i + 1,
                format!("{} values, header has {d}", values.len()),
            ));
        }
        out.push(FeatureVector {
            subject_id: id,
            label,
            values,
        });
    }
    Ok(out)
}
