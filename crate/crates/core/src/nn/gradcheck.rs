//! Central finite-difference checks of the analytic gradients.
//!
//! Each perturbed forward pass restarts from the cached input of the perturbed
//! layer, so checking every parameter of a deep stack stays affordable.

use rayon::prelude::*;

use super::{Loss, Network, Target, Tensor};
use crate::error::Result;

/// Denominator floor of [`rel_error`].
pub const REL_FLOOR: f64 = 1e-8;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    /// Layer index, or `None` for an input coordinate.
    pub layer: Option<usize>,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    pub coords: Vec<Coordinate>,
}

impl GradCheck {
    pub fn checked(&self) -> usize {
        self.coords.len()
    }

    pub fn worst(&self) -> Option<&Coordinate> {
        self.coords
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |c| c.rel_error)
    }

    pub fn failures(&self, tol: f64) -> impl Iterator<Item = &Coordinate> {
        self.coords.iter().filter(move |c| !(c.rel_error < tol))
    }
}

/// Checks every parameter of every layer (frozen layers included).
pub fn check_params(
    net: &Network,
    x: &Tensor,
    target: &Target,
    loss: Loss,
    eps: f64,
) -> Result<GradCheck> {
    let mut net = net.clone();
    net.frozen_prefix = 0;
    let (_, grads) = net.loss_and_grad(x, target, loss)?;
    let mut coords = Vec::with_capacity(net.param_count());
    let n_layers = net.layers().len();
    for k in 0..n_layers {
        let n = net.layers()[k].params.len();
        if n == 0 {
            continue;
        }
        let input_k = net.forward_until(x, k)?;
        let numeric: Vec<f64> = (0..n)
            .into_par_iter()
            .map_init(
                || net.clone(),
                |local, i| -> Result<f64> {
                    let orig = local.layers()[k].params[i];
                    local.layers_mut()[k].params[i] = orig + eps;
                    let plus = local.output_loss(
                        local.forward_range(input_k.clone(), k, n_layers)?,
                        target,
                        loss,
                    )?;
                    local.layers_mut()[k].params[i] = orig - eps;
                    let minus = local.output_loss(
                        local.forward_range(input_k.clone(), k, n_layers)?,
                        target,
                        loss,
                    )?;
                    local.layers_mut()[k].params[i] = orig;
                    Ok((plus - minus) / (2.0 * eps))
                },
            )
            .collect::<Result<_>>()?;
        for (i, num) in numeric.into_iter().enumerate() {
            let a = grads[k][i];
            coords.push(Coordinate {
                layer: Some(k),
                index: i,
                analytic: a,
                numeric: num,
                rel_error: rel_error(a, num),
            });
        }
    }
    Ok(GradCheck { coords })
}

/// Checks the gradient with respect to every input coordinate.
pub fn check_input(
    net: &Network,
    x: &Tensor,
    target: &Target,
    loss: Loss,
    eps: f64,
) -> Result<GradCheck> {
    let analytic = net.input_gradient(x, target, loss)?;
    let numeric: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let plus = net.loss(&xp, target, loss)?;
            xp.data_mut()[i] = x.data()[i] - eps;
            let minus = net.loss(&xp, target, loss)?;
            Ok((plus - minus) / (2.0 * eps))
        })
        .collect::<Result<_>>()?;
    let coords = numeric
        .into_iter()
        .enumerate()
        .map(|(i, num)| {
            let a = analytic.data()[i];
            Coordinate {
                layer: None,
                index: i,
                analytic: a,
                numeric: num,
                rel_error: rel_error(a, num),
            }
        })
        .collect();
    Ok(GradCheck { coords })
}
