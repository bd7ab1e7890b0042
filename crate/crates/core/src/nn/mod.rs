//! Small sequential neural-network kernel with reverse-mode differentiation.
//!
//! A [`Network`] is a stack of [`LayerSpec`]s with their parameters. A forward pass
//! records a [`Trace`] of what each layer needs for its backward pass; gradients
//! are then propagated from the loss back through the trace, layer by layer.
//! Parameters are never mutated during a pass, so per-sample gradients can be
//! computed in parallel and reduced afterwards.

pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod optim;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use optim::{train_epochs, train_step, Optimizer, OptimizerKind, TrainConfig};

/// Height × width × channels feature map; flat vectors use shape `(1, 1, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::dim(format!(
                "{} values for a {h}x{w}x{c} tensor",
                data.len()
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn flat(data: Vec<f64>) -> Self {
        Self {
            h: 1,
            w: 1,
            c: data.len(),
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// 3×3 kernel, stride 1, same padding.
    Conv2D {
        c_in: usize,
        c_out: usize,
    },
    /// 2×2 window, stride 2, ceil mode.
    MaxPool2x2,
    UpsampleNearest2x,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    ReLU,
    Tanh,
    Softmax,
    /// Crops the spatial dims to `size × size` around the center.
    CenterCrop {
        size: usize,
    },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2D { c_in, c_out } => {
                kernels::KERNEL * kernels::KERNEL * c_in * c_out + c_out
            }
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let (h, w, c) = input;
        match *self {
            LayerSpec::Conv2D { c_in, c_out } => {
                if c != c_in {
                    return Err(Error::dim(format!("conv expects {c_in} channels, got {c}")));
                }
                Ok((h, w, c_out))
            }
            LayerSpec::MaxPool2x2 => Ok((h.div_ceil(2), w.div_ceil(2), c)),
            LayerSpec::UpsampleNearest2x => Ok((2 * h, 2 * w, c)),
            LayerSpec::Dense { inputs, outputs } => {
                if h * w * c != inputs {
                    return Err(Error::dim(format!(
                        "dense expects {inputs} inputs, got {}",
                        h * w * c
                    )));
                }
                Ok((1, 1, outputs))
            }
            LayerSpec::ReLU | LayerSpec::Tanh | LayerSpec::Softmax => Ok(input),
            LayerSpec::CenterCrop { size } => {
                if h < size || w < size {
                    return Err(Error::dim(format!("cannot crop {h}x{w} to {size}x{size}")));
                }
                Ok((size, size, c))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::MaxPool2x2 => "MaxPool2x2",
            LayerSpec::UpsampleNearest2x => "Upsample2x",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::Tanh => "Tanh",
            LayerSpec::Softmax => "Softmax",
            LayerSpec::CenterCrop { .. } => "CenterCrop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<f64>,
}

/// Per-layer data recorded by a forward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Input(Tensor),
    Pool { shape: Shape, argmax: Vec<u32> },
    Shape(Shape),
    Output(Tensor),
    Softmax { logits: Tensor, probs: Tensor },
}

/// Forward-pass record: one cache per layer plus the final output.
#[derive(Debug, Clone)]
pub struct Trace {
    pub caches: Vec<Cache>,
    pub output: Tensor,
}

/// Per-layer parameter gradients (empty vectors for parameter-free layers).
pub type Gradients = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Mean squared error over all output elements.
    Mse,
    /// Negative log-likelihood of the target class; requires a final Softmax.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Tensor(Tensor),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Shape,
    layers: Vec<Layer>,
    /// Layers with index below this receive no updates.
    pub frozen_prefix: usize,
}

impl Network {
    /// Builds a network with He-uniform weights and zero biases.
    pub fn new(input_shape: Shape, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let next = spec.output_shape(shape)?;
            let params = match *spec {
                LayerSpec::Conv2D { c_in, c_out } => {
                    let fan_in = (kernels::KERNEL * kernels::KERNEL * c_in) as f64;
                    he_uniform(&mut rng, fan_in, spec.param_count() - c_out, c_out)
                }
                LayerSpec::Dense { inputs, outputs } => {
                    he_uniform(&mut rng, inputs as f64, inputs * outputs, outputs)
                }
                _ => Vec::new(),
            };
            layers.push(Layer {
                spec: *spec,
                params,
            });
            shape = next;
        }
        Ok(Self {
            input_shape,
            layers,
            frozen_prefix: 0,
        })
    }

    /// Assembles a network from explicit layers, checking shapes and parameter counts.
    pub fn from_layers(input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape;
        for (i, l) in layers.iter().enumerate() {
            shape = l.spec.output_shape(shape)?;
            if l.params.len() != l.spec.param_count() {
                return Err(Error::dim(format!(
                    "layer {i} ({}) has {} parameters, expected {}",
                    l.spec.name(),
                    l.params.len(),
                    l.spec.param_count()
                )));
            }
        }
        Ok(Self {
            input_shape,
            layers,
            frozen_prefix: 0,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    /// Output shape after every layer.
    pub fn layer_shapes(&self) -> Vec<Shape> {
        let mut shape = self.input_shape;
        self.layers
            .iter()
            .map(|l| {
                shape = l
                    .spec
                    .output_shape(shape)
                    .expect("validated at construction");
                shape
            })
            .collect()
    }

    pub fn output_shape(&self) -> Shape {
        self.layer_shapes()
            .last()
            .copied()
            .unwrap_or(self.input_shape)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::dim(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_until(x, self.layers.len())
    }

    /// Runs the first `n_layers` layers only.
    pub fn forward_until(&self, x: &Tensor, n_layers: usize) -> Result<Tensor> {
        self.check_input(x)?;
        self.forward_range(x.clone(), 0, n_layers)
    }

    /// Runs layers `start..end` on `x`, the output of layer `start - 1`.
    pub fn forward_range(&self, x: Tensor, start: usize, end: usize) -> Result<Tensor> {
        let mut cur = x;
        for layer in &self.layers[start..end] {
            cur = match layer.spec {
                LayerSpec::Conv2D { c_out, .. } => {
                    kernels::conv2d_forward(&cur, &layer.params, c_out)
                }
                LayerSpec::MaxPool2x2 => kernels::maxpool2x2_forward(&cur).0,
                LayerSpec::UpsampleNearest2x => kernels::upsample2x_forward(&cur),
                LayerSpec::Dense { outputs, .. } => {
                    kernels::dense_forward(&cur, &layer.params, outputs)
                }
                LayerSpec::ReLU => map(cur, |v| v.max(0.0)),
                LayerSpec::Tanh => map(cur, f64::tanh),
                LayerSpec::Softmax => {
                    let (h, w, c) = cur.shape();
                    Tensor::from_vec(h, w, c, kernels::softmax(cur.data()))?
                }
                LayerSpec::CenterCrop { size } => kernels::center_crop_forward(&cur, size),
            };
        }
        Ok(cur)
    }

    /// Forward pass recording everything the backward pass needs.
    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer.spec {
                LayerSpec::Conv2D { c_out, .. } => {
                    let out = kernels::conv2d_forward(&cur, &layer.params, c_out);
                    (out, Cache::Input(cur))
                }
                LayerSpec::MaxPool2x2 => {
                    let (out, argmax) = kernels::maxpool2x2_forward(&cur);
                    (
                        out,
                        Cache::Pool {
                            shape: cur.shape(),
                            argmax,
                        },
                    )
                }
                LayerSpec::UpsampleNearest2x => {
                    (kernels::upsample2x_forward(&cur), Cache::Shape(cur.shape()))
                }
                LayerSpec::Dense { outputs, .. } => {
                    let out = kernels::dense_forward(&cur, &layer.params, outputs);
                    (out, Cache::Input(cur))
                }
                LayerSpec::ReLU => {
                    let out = map(cur, |v| v.max(0.0));
                    (out.clone(), Cache::Output(out))
                }
                LayerSpec::Tanh => {
                    let out = map(cur, f64::tanh);
                    (out.clone(), Cache::Output(out))
                }
                LayerSpec::Softmax => {
                    let (h, w, c) = cur.shape();
                    let probs = Tensor::from_vec(h, w, c, kernels::softmax(cur.data()))?;
                    (probs.clone(), Cache::Softmax { logits: cur, probs })
                }
                LayerSpec::CenterCrop { size } => (
                    kernels::center_crop_forward(&cur, size),
                    Cache::Shape(cur.shape()),
                ),
            };
            caches.push(cache);
            cur = next;
        }
        Ok(Trace {
            caches,
            output: cur,
        })
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the output of layer `end - 1`)
    /// down to the first trainable layer.
    pub fn backward_from(&self, trace: &Trace, end: usize, grad_out: Tensor) -> Gradients {
        self.backward_impl(trace, end, grad_out, false).0
    }

    /// Gradient of the loss with respect to the network input.
    pub fn input_gradient(&self, x: &Tensor, target: &Target, loss: Loss) -> Result<Tensor> {
        let trace = self.forward_trace(x)?;
        let (_, end, grad) = self.output_grad(&trace, target, loss)?;
        Ok(self
            .backward_impl(&trace, end, grad, true)
            .1
            .expect("propagated to input"))
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        end: usize,
        grad_out: Tensor,
        to_input: bool,
    ) -> (Gradients, Option<Tensor>) {
        let mut grads: Gradients = self.layers.iter().map(|_| Vec::new()).collect();
        let mut g = grad_out;
        let stop = if to_input { 0 } else { self.frozen_prefix };
        for idx in (stop..end).rev() {
            let layer = &self.layers[idx];
            let need_input = idx > stop || to_input;
            let next = match (&layer.spec, &trace.caches[idx]) {
                (LayerSpec::Conv2D { c_out, .. }, Cache::Input(input)) => {
                    let mut gp = vec![0.0; layer.params.len()];
                    let gi = kernels::conv2d_backward(
                        input,
                        &layer.params,
                        *c_out,
                        &g,
                        &mut gp,
                        need_input,
                    );
                    if idx >= self.frozen_prefix {
                        grads[idx] = gp;
                    }
                    gi
                }
                (LayerSpec::Dense { outputs, .. }, Cache::Input(input)) => {
                    let mut gp = vec![0.0; layer.params.len()];
                    let gi = kernels::dense_backward(
                        input,
                        &layer.params,
                        *outputs,
                        &g,
                        &mut gp,
                        need_input,
                    );
                    if idx >= self.frozen_prefix {
                        grads[idx] = gp;
                    }
                    gi
                }
                (LayerSpec::MaxPool2x2, Cache::Pool { shape, argmax }) => {
                    Some(kernels::maxpool2x2_backward(*shape, argmax, &g))
                }
                (LayerSpec::UpsampleNearest2x, Cache::Shape(shape)) => {
                    Some(kernels::upsample2x_backward(*shape, &g))
                }
                (LayerSpec::CenterCrop { size }, Cache::Shape(shape)) => {
                    Some(kernels::center_crop_backward(*shape, *size, &g))
                }
                (LayerSpec::ReLU, Cache::Output(out)) => {
                    let mut gi = g;
                    for (gv, &o) in gi.data_mut().iter_mut().zip(out.data()) {
                        if o <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    Some(gi)
                }
                (LayerSpec::Tanh, Cache::Output(out)) => {
                    let mut gi = g;
                    for (gv, &o) in gi.data_mut().iter_mut().zip(out.data()) {
                        *gv *= 1.0 - o * o;
                    }
                    Some(gi)
                }
                (LayerSpec::Softmax, Cache::Softmax { probs, .. }) => {
                    let p = probs.data();
                    let s: f64 = g.data().iter().zip(p).map(|(a, b)| a * b).sum();
                    let mut gi = g;
                    for (gv, &pv) in gi.data_mut().iter_mut().zip(p) {
                        *gv = pv * (*gv - s);
                    }
                    Some(gi)
                }
                _ => unreachable!("trace does not match layer {idx}"),
            };
            match next {
                Some(t) if need_input => g = t,
                _ => return (grads, None),
            }
        }
        (grads, to_input.then_some(g))
    }

    /// Loss value and parameter gradients for one sample.
    ///
    /// Cross-entropy is fused with the final softmax: the gradient entering the
    /// logits is `p - onehot`.
    pub fn loss_and_grad(
        &self,
        x: &Tensor,
        target: &Target,
        loss: Loss,
    ) -> Result<(f64, Gradients)> {
        self.loss_grad_output(x, target, loss)
            .map(|(l, g, _)| (l, g))
    }

    /// Like [`Network::loss_and_grad`], also returning the forward output.
    pub fn loss_grad_output(
        &self,
        x: &Tensor,
        target: &Target,
        loss: Loss,
    ) -> Result<(f64, Gradients, Tensor)> {
        let trace = self.forward_trace(x)?;
        let (value, end, grad) = self.output_grad(&trace, target, loss)?;
        let grads = self.backward_from(&trace, end, grad);
        Ok((value, grads, trace.output))
    }

    /// Loss value, the layer count the gradient enters below, and that gradient.
    fn output_grad(
        &self,
        trace: &Trace,
        target: &Target,
        loss: Loss,
    ) -> Result<(f64, usize, Tensor)> {
        let (value, end, grad) = match (loss, target) {
            (Loss::Mse, Target::Tensor(t)) => {
                if t.shape() != trace.output.shape() {
                    return Err(Error::dim(format!(
                        "target {:?} vs output {:?}",
                        t.shape(),
                        trace.output.shape()
                    )));
                }
                let (value, grad) = mse(&trace.output, t);
                (value, self.layers.len(), grad)
            }
            (Loss::CrossEntropy, Target::Class(k)) => {
                let Some(Cache::Softmax { logits, probs }) = trace.caches.last() else {
                    return Err(Error::invalid("cross-entropy needs a final Softmax layer"));
                };
                if *k >= probs.len() {
                    return Err(Error::invalid(format!("class {k} out of range")));
                }
                let z = logits.data();
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                let mut grad = probs.clone();
                grad.data_mut()[*k] -= 1.0;
                (lse - z[*k], self.layers.len() - 1, grad)
            }
            _ => return Err(Error::invalid("loss and target kinds do not match")),
        };
        if !value.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {value}")));
        }
        Ok((value, end, grad))
    }

    /// Loss of one sample without computing gradients.
    pub fn loss(&self, x: &Tensor, target: &Target, loss: Loss) -> Result<f64> {
        self.output_loss(self.forward(x)?, target, loss)
    }

    /// Loss of an already computed network output.
    pub fn output_loss(&self, out: Tensor, target: &Target, loss: Loss) -> Result<f64> {
        match (loss, target) {
            (Loss::Mse, Target::Tensor(t)) => Ok(mse(&out, t).0),
            (Loss::CrossEntropy, Target::Class(k)) => {
                Ok(-out.data()[*k].max(f64::MIN_POSITIVE).ln())
            }
            _ => Err(Error::invalid("loss and target kinds do not match")),
        }
    }

    /// All parameters, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params.iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dim(format!(
                "{} parameters for a network with {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.params.len();
            l.params.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

fn map(mut t: Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    for v in t.data_mut() {
        *v = f(*v);
    }
    t
}

fn mse(out: &Tensor, target: &Tensor) -> (f64, Tensor) {
    let n = out.len() as f64;
    let mut grad = out.clone();
    let mut value = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        value += d * d;
        *g = 2.0 * d / n;
    }
    (value / n, grad)
}

fn he_uniform(rng: &mut rng::Rng, fan_in: f64, n_weights: usize, n_bias: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in).sqrt();
    let mut p: Vec<f64> = (0..n_weights)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    p.extend(std::iter::repeat_n(0.0, n_bias));
    p
}
