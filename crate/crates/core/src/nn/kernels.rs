//! Forward and backward kernels for the individual layer kinds.
//!
//! Feature maps are stored height × width × channels (channels fastest). Conv
//! weights are laid out `[ky][kx][c_in][c_out]` followed by `c_out` biases; dense
//! weights `[in][out]` followed by `out` biases.

use super::Tensor;

pub const KERNEL: usize = 3;

/// 3×3, stride 1, zero "same" padding cross-correlation.
pub fn conv2d_forward(input: &Tensor, params: &[f64], c_out: usize) -> Tensor {
    let (h, w, c_in) = input.shape();
    let weights = &params[..KERNEL * KERNEL * c_in * c_out];
    let bias = &params[KERNEL * KERNEL * c_in * c_out..];
    let mut out = Tensor::zeros(h, w, c_out);
    let x = input.data();
    let o = out.data_mut();
    for y in 0..h {
        for xx in 0..w {
            let out_px = &mut o[(y * w + xx) * c_out..(y * w + xx + 1) * c_out];
            out_px.copy_from_slice(bias);
            for ky in 0..KERNEL {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..KERNEL {
                    let Some(ix) = (xx + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let in_px = &x[(iy * w + ix) * c_in..(iy * w + ix + 1) * c_in];
                    let wk = &weights[(ky * KERNEL + kx) * c_in * c_out..];
                    for (ci, &v) in in_px.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let wrow = &wk[ci * c_out..(ci + 1) * c_out];
                        for (acc, &wv) in out_px.iter_mut().zip(wrow) {
                            *acc += v * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `grad_params`; returns the input gradient
/// when `need_input_grad`.
pub fn conv2d_backward(
    input: &Tensor,
    params: &[f64],
    c_out: usize,
    grad_out: &Tensor,
    grad_params: &mut [f64],
    need_input_grad: bool,
) -> Option<Tensor> {
    let (h, w, c_in) = input.shape();
    let n_w = KERNEL * KERNEL * c_in * c_out;
    let weights = &params[..n_w];
    let (gw, gb) = grad_params.split_at_mut(n_w);
    let g = grad_out.data();
    let x = input.data();
    let mut grad_in = need_input_grad.then(|| Tensor::zeros(h, w, c_in));
    for y in 0..h {
        for xx in 0..w {
            let g_px = &g[(y * w + xx) * c_out..(y * w + xx + 1) * c_out];
            for (b, &gv) in gb.iter_mut().zip(g_px) {
                *b += gv;
            }
            for ky in 0..KERNEL {
                let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..KERNEL {
                    let Some(ix) = (xx + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    let base = (ky * KERNEL + kx) * c_in * c_out;
                    let in_off = (iy * w + ix) * c_in;
                    for ci in 0..c_in {
                        let v = x[in_off + ci];
                        let range = base + ci * c_out..base + (ci + 1) * c_out;
                        if v != 0.0 {
                            for (gwv, &gv) in gw[range.clone()].iter_mut().zip(g_px) {
                                *gwv += v * gv;
                            }
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            gi.data_mut()[in_off + ci] += dot(&weights[range], g_px);
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Ceil-mode 2×2 max pooling. Returns the output and, per output element, the
/// flat index of the winning input element (first maximum on ties).
pub fn maxpool2x2_forward(input: &Tensor) -> (Tensor, Vec<u32>) {
    let (h, w, c) = input.shape();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(oh, ow, c);
    let mut argmax = vec![0u32; oh * ow * c];
    let x = input.data();
    for y in 0..oh {
        for xx in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for iy in 2 * y..(2 * y + 2).min(h) {
                    for ix in 2 * xx..(2 * xx + 2).min(w) {
                        let idx = (iy * w + ix) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (y * ow + xx) * c + ch;
                out.data_mut()[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2x2_backward(
    input_shape: (usize, usize, usize),
    argmax: &[u32],
    grad_out: &Tensor,
) -> Tensor {
    let (h, w, c) = input_shape;
    let mut gi = Tensor::zeros(h, w, c);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gi.data_mut()[idx as usize] += g;
    }
    gi
}

pub fn upsample2x_forward(input: &Tensor) -> Tensor {
    let (h, w, c) = input.shape();
    let mut out = Tensor::zeros(2 * h, 2 * w, c);
    let x = input.data();
    for y in 0..2 * h {
        for xx in 0..2 * w {
            let src = ((y / 2) * w + xx / 2) * c;
            let dst = (y * 2 * w + xx) * c;
            out.data_mut()[dst..dst + c].copy_from_slice(&x[src..src + c]);
        }
    }
    out
}

pub fn upsample2x_backward(input_shape: (usize, usize, usize), grad_out: &Tensor) -> Tensor {
    let (h, w, c) = input_shape;
    let mut gi = Tensor::zeros(h, w, c);
    let g = grad_out.data();
    for y in 0..2 * h {
        for xx in 0..2 * w {
            let src = (y * 2 * w + xx) * c;
            let dst = ((y / 2) * w + xx / 2) * c;
            for ch in 0..c {
                gi.data_mut()[dst + ch] += g[src + ch];
            }
        }
    }
    gi
}

/// Offsets used when center-cropping an `h × w` map to `size × size`.
pub fn crop_offsets(h: usize, w: usize, size: usize) -> (usize, usize) {
    ((h - size) / 2, (w - size) / 2)
}

pub fn center_crop_forward(input: &Tensor, size: usize) -> Tensor {
    let (h, w, c) = input.shape();
    let (oy, ox) = crop_offsets(h, w, size);
    let mut out = Tensor::zeros(size, size, c);
    for y in 0..size {
        let src = ((y + oy) * w + ox) * c;
        let dst = y * size * c;
        out.data_mut()[dst..dst + size * c].copy_from_slice(&input.data()[src..src + size * c]);
    }
    out
}

pub fn center_crop_backward(
    input_shape: (usize, usize, usize),
    size: usize,
    grad_out: &Tensor,
) -> Tensor {
    let (h, w, c) = input_shape;
    let (oy, ox) = crop_offsets(h, w, size);
    let mut gi = Tensor::zeros(h, w, c);
    for y in 0..size {
        let dst = ((y + oy) * w + ox) * c;
        let src = y * size * c;
        gi.data_mut()[dst..dst + size * c].copy_from_slice(&grad_out.data()[src..src + size * c]);
    }
    gi
}

pub fn dense_forward(input: &Tensor, params: &[f64], outputs: usize) -> Tensor {
    let inputs = input.len();
    let (weights, bias) = params.split_at(inputs * outputs);
    let mut out = bias.to_vec();
    for (i, &v) in input.data().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let row = &weights[i * outputs..(i + 1) * outputs];
        for (acc, &wv) in out.iter_mut().zip(row) {
            *acc += v * wv;
        }
    }
    Tensor::flat(out)
}

pub fn dense_backward(
    input: &Tensor,
    params: &[f64],
    outputs: usize,
    grad_out: &Tensor,
    grad_params: &mut [f64],
    need_input_grad: bool,
) -> Option<Tensor> {
    let inputs = input.len();
    let weights = &params[..inputs * outputs];
    let (gw, gb) = grad_params.split_at_mut(inputs * outputs);
    let g = grad_out.data();
    for (b, &gv) in gb.iter_mut().zip(g) {
        *b += gv;
    }
    for (i, &v) in input.data().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (gwv, &gv) in gw[i * outputs..(i + 1) * outputs].iter_mut().zip(g) {
            *gwv += v * gv;
        }
    }
    need_input_grad.then(|| {
        let (h, w, c) = input.shape();
        let data = (0..inputs)
            .map(|i| dot(&weights[i * outputs..(i + 1) * outputs], g))
            .collect();
        Tensor::from_vec(h, w, c, data).expect("shape preserved")
    })
}

/// Numerically stable softmax over all elements.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    for v in e.iter_mut() {
        *v /= s;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        let input = Tensor::from_vec(3, 4, 1, (0..12).map(|v| v as f64 - 3.5).collect()).unwrap();
        let mut params = vec![0.0; 10];
        params[4] = 1.0; // center tap
        let out = conv2d_forward(&input, &params, 1);
        assert_eq!(out, input);
    }

    #[test]
    fn conv_all_ones_on_2x2() {
        // Every output sees the full 2×2 input through the zero-padded 3×3 window.
        let input = Tensor::from_vec(2, 2, 1, vec![1.0; 4]).unwrap();
        let mut params = vec![1.0; 9];
        params.push(0.0);
        let out = conv2d_forward(&input, &params, 1);
        assert_eq!(out.data(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn maxpool_examples() {
        let input = Tensor::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, arg) = maxpool2x2_forward(&input);
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
        let (out, _) = maxpool2x2_forward(&Tensor::zeros(118, 118, 2));
        assert_eq!(out.shape(), (59, 59, 2));
        let (out, _) = maxpool2x2_forward(&Tensor::zeros(59, 59, 1));
        assert_eq!(out.shape(), (30, 30, 1));
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax_only() {
        let input = Tensor::from_vec(3, 3, 1, vec![1., 5., 2., 0., 3., 9., 7., 8., 4.]).unwrap();
        let (out, arg) = maxpool2x2_forward(&input);
        assert_eq!(out.data(), &[5.0, 9.0, 8.0, 4.0]);
        let g = Tensor::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gi = maxpool2x2_backward(input.shape(), &arg, &g);
        assert_eq!(gi.data(), &[0., 1., 0., 0., 0., 2., 0., 3., 4.]);
    }

    #[test]
    fn upsample_examples() {
        let out = upsample2x_forward(&Tensor::from_vec(1, 1, 1, vec![1.0]).unwrap());
        assert_eq!(out.data(), &[1.0; 4]);
        assert_eq!(
            upsample2x_forward(&Tensor::zeros(15, 15, 1)).shape(),
            (30, 30, 1)
        );
        assert_eq!(
            upsample2x_forward(&Tensor::zeros(60, 60, 32)).shape(),
            (120, 120, 32)
        );
    }

    #[test]
    fn crop_takes_the_center() {
        let input = Tensor::from_vec(4, 4, 1, (0..16).map(|v| v as f64).collect()).unwrap();
        let out = center_crop_forward(&input, 2);
        assert_eq!(out.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert_eq!(crop_offsets(120, 120, 118), (1, 1));
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[10.0, 9.0, -50.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }
}
