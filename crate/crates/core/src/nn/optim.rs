//! SGD / Adam updates and the minibatch training loop.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Gradients, Loss, Network, Target, Tensor};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be a nonnegative number, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state aligned with the network's layers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Optimizer {
    pub fn new(net: &Network, kind: OptimizerKind, lr: f64) -> Self {
        let zeros: Gradients = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.params.len()])
            .collect();
        Self {
            kind,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn apply(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let frozen = net.frozen_prefix;
        let bc1 = 1.0 - BETA1.powi(self.step);
        let bc2 = 1.0 - BETA2.powi(self.step);
        for (idx, layer) in net.layers_mut().iter_mut().enumerate().skip(frozen) {
            let g = &grads[idx];
            if g.is_empty() {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, gv) in layer.params.iter_mut().zip(g) {
                        *p -= self.lr * gv;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
                    for k in 0..g.len() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                        let mhat = m[k] / bc1;
                        let vhat = v[k] / bc2;
                        layer.params[k] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Mean loss and mean gradient over a batch. Per-sample work runs in parallel;
/// the reduction is sequential in batch order, so results do not depend on
/// thread scheduling.
pub fn batch_gradient(
    net: &Network,
    batch: &[(&Tensor, &Target)],
    loss: Loss,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let per_sample: Vec<(f64, Gradients, usize)> = batch
        .par_iter()
        .map(|(x, t)| {
            net.loss_grad_output(x, t, loss)
                .map(|(l, g, out)| (l, g, argmax(out.data())))
        })
        .collect::<Result<_>>()?;
    let mut total: Gradients = net
        .layers()
        .iter()
        .map(|l| vec![0.0; l.params.len()])
        .collect();
    let mut losses = Vec::with_capacity(batch.len());
    let mut predictions = Vec::with_capacity(batch.len());
    for (l, g, pred) in &per_sample {
        losses.push(*l);
        predictions.push(*pred);
        for (acc, gl) in total.iter_mut().zip(g) {
            for (a, v) in acc.iter_mut().zip(gl) {
                *a += v;
            }
        }
    }
    let n = batch.len() as f64;
    for acc in total.iter_mut() {
        for a in acc.iter_mut() {
            *a /= n;
        }
    }
    Ok(BatchGradient {
        losses,
        predictions,
        grads: total,
    })
}

pub struct BatchGradient {
    pub losses: Vec<f64>,
    /// Argmax of each sample's output before the update.
    pub predictions: Vec<usize>,
    pub grads: Gradients,
}

/// One optimizer step on a batch; returns the mean batch loss before the update.
pub fn train_step(
    net: &mut Network,
    opt: &mut Optimizer,
    batch: &[(&Tensor, &Target)],
    loss: Loss,
) -> Result<f64> {
    let bg = batch_gradient(net, batch, loss)?;
    let mean = bg.losses.iter().sum::<f64>() / bg.losses.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Divergence(format!("batch loss {mean}")));
    }
    opt.apply(net, &bg.grads);
    Ok(mean)
}

/// Per-epoch statistics from [`train_epochs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    /// Mean sample loss seen during each epoch (summed in sample-index order).
    pub loss: Vec<f64>,
    /// Fraction of samples whose pre-update prediction was the target class
    /// (classification losses only).
    pub accuracy: Vec<f64>,
}

/// Minibatch training with a seeded per-epoch shuffle.
pub fn train_epochs(
    net: &mut Network,
    inputs: &[Tensor],
    targets: &[Target],
    loss: Loss,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if inputs.len() != targets.len() {
        return Err(Error::dim(format!(
            "{} inputs, {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let mut opt = Optimizer::new(net, config.optimizer, config.learning_rate);
    let mut rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = History::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sample_loss = vec![0.0; inputs.len()];
        let mut correct = vec![false; inputs.len()];
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Tensor, &Target)> =
                chunk.iter().map(|&i| (&inputs[i], &targets[i])).collect();
            let bg = batch_gradient(net, &batch, loss)?;
            for (k, &i) in chunk.iter().enumerate() {
                sample_loss[i] = bg.losses[k];
                correct[i] = matches!(targets[i], Target::Class(c) if c == bg.predictions[k]);
            }
            let mean = bg.losses.iter().sum::<f64>() / bg.losses.len() as f64;
            if !mean.is_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}: batch loss {mean}"
                )));
            }
            opt.apply(net, &bg.grads);
        }
        let epoch_loss = sample_loss.iter().sum::<f64>() / inputs.len() as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        history.loss.push(epoch_loss);
        if loss == Loss::CrossEntropy {
            history
                .accuracy
                .push(correct.iter().filter(|&&c| c).count() as f64 / inputs.len() as f64);
        }
    }
    Ok(history)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
