//! Shared forward/backward kernels: temporal convolution, max-pooling,
//! softmax with negative log likelihood, ReLU and inverted dropout.

use rand::Rng;

use crate::error::{HarError, Result};
use crate::tensor::Tensor;

/// Valid (no padding), stride-1 temporal convolution.
///
/// `input` is `[s x d]` (samples by channels), `kernels` is `[nF x kW x d]`,
/// `bias` is `[nF]`. Output is `[(s - kW + 1) x nF]`.
pub fn conv1d_temporal(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 2 || kernels.rank() != 3 {
        return Err(HarError::RejectedInput(
            "conv1d_temporal needs a 2-D input and 3-D kernel bank".into(),
        ));
    }
    let (s, d) = (input.shape()[0], input.shape()[1]);
    let (nf, kw, kd) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kd != d {
        return Err(HarError::ShapeMismatch(format!(
            "kernel channels {kd} != input channels {d}"
        )));
    }
    if bias.len() != nf {
        return Err(HarError::ShapeMismatch(format!(
            "bias length {} != kernel count {nf}",
            bias.len()
        )));
    }
    if s < kw {
        return Err(HarError::FrameTooShort(format!(
            "{s} samples < kernel width {kw}"
        )));
    }
    let out_len = s - kw + 1;
    let mut out = Tensor::zeros(&[out_len, nf]);
    for t in 0..out_len {
        for f in 0..nf {
            let mut acc = bias.data()[f];
            for tau in 0..kw {
                let in_row = input.row(t + tau);
                let k_off = (f * kw + tau) * d;
                let k_row = &kernels.data()[k_off..k_off + d];
                for (iv, kv) in in_row.iter().zip(k_row) {
                    acc += iv * kv;
                }
            }
            out.set2(t, f, acc);
        }
    }
    Ok(out)
}

/// Gradients of [`conv1d_temporal`] given `d_out [(s-kW+1) x nF]`.
///
/// Returns `(d_input, d_kernels, d_bias)`.
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    d_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (s, d) = (input.shape()[0], input.shape()[1]);
    let (nf, kw, _) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    let out_len = s - kw + 1;
    debug_assert_eq!(d_out.shape(), &[out_len, nf]);

    let mut d_input = Tensor::zeros(&[s, d]);
    let mut d_kernels = Tensor::zeros(&[nf, kw, d]);
    let mut d_bias = Tensor::zeros(&[nf]);

    for t in 0..out_len {
        let g_row = d_out.row(t);
        for (f, &g) in g_row.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            d_bias.data_mut()[f] += g;
            for tau in 0..kw {
                let in_row = input.row(t + tau);
                let k_off = (f * kw + tau) * d;
                for c in 0..d {
                    d_kernels.data_mut()[k_off + c] += g * in_row[c];
                    d_input.data_mut()[(t + tau) * d + c] += g * kernels.data()[k_off + c];
                }
            }
        }
    }
    (d_input, d_kernels, d_bias)
}

/// Non-overlapping max-pooling of width 2 along the time axis.
///
/// Trailing samples that do not fill a full window are dropped. Besides the
/// pooled output, returns the argmax row index per pooled cell so the
/// backward pass can route gradients.
pub fn maxpool1d(input: &Tensor, width: usize) -> Result<(Tensor, Vec<usize>)> {
    if input.rank() != 2 {
        return Err(HarError::RejectedInput("maxpool1d needs a 2-D input".into()));
    }
    let (s, nf) = (input.shape()[0], input.shape()[1]);
    if s < width {
        return Err(HarError::FrameTooShort(format!(
            "{s} samples < pool width {width}"
        )));
    }
    let out_len = s / width;
    let mut out = Tensor::zeros(&[out_len, nf]);
    let mut argmax = vec![0usize; out_len * nf];
    for t in 0..out_len {
        for f in 0..nf {
            let mut best = input.at2(t * width, f);
            let mut best_row = t * width;
            for r in 1..width {
                let v = input.at2(t * width + r, f);
                if v > best {
                    best = v;
                    best_row = t * width + r;
                }
            }
            out.set2(t, f, best);
            argmax[t * nf + f] = best_row;
        }
    }
    Ok((out, argmax))
}

/// Route pooled gradients back to the argmax positions.
pub fn maxpool1d_backward(
    input_shape: &[usize],
    argmax: &[usize],
    d_out: &Tensor,
) -> Tensor {
    let mut d_input = Tensor::zeros(input_shape);
    let nf = input_shape[1];
    for t in 0..d_out.shape()[0] {
        for f in 0..nf {
            let src = argmax[t * nf + f];
            d_input.data_mut()[src * nf + f] += d_out.at2(t, f);
        }
    }
    d_input
}

/// Numerically stabilised softmax with negative log likelihood.
///
/// Returns the probability vector and `-log p[label]`.
pub fn softmax_nll(logits: &Tensor, label: usize) -> Result<(Tensor, f64)> {
    if logits.rank() != 1 {
        return Err(HarError::RejectedInput("softmax_nll needs a 1-D input".into()));
    }
    if !logits.all_finite() {
        return Err(HarError::Numeric("non-finite logits".into()));
    }
    if label >= logits.len() {
        return Err(HarError::RejectedInput(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let probs = softmax_vec(logits.data());
    let nll = -probs[label].max(f64::MIN_POSITIVE).ln();
    Ok((Tensor::vector(&probs), nll))
}

/// Max-subtracted softmax of a slice.
pub(crate) fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Row-wise softmax of a 2-D tensor, in place.
pub(crate) fn softmax_rows(x: &mut Tensor) {
    let n = x.shape()[1];
    for i in 0..x.shape()[0] {
        let row = x.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        let _ = n;
    }
}

/// ReLU applied in place; returns nothing, the caller keeps the input around
/// for the backward mask.
pub(crate) fn relu_inplace(x: &mut Tensor) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward of ReLU: zero the gradient wherever the activation was clipped.
pub(crate) fn relu_backward_inplace(grad: &mut Tensor, activated: &Tensor) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activated.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Inverted-dropout mask: each unit survives with probability `1 - p_drop`
/// and survivors are scaled by `1 / (1 - p_drop)`, so the expected train-mode
/// activation equals the infer-mode activation. `p_drop >= 1` zeroes
/// everything.
pub(crate) fn dropout_mask<R: Rng>(len: usize, p_drop: f64, rng: &mut R) -> Vec<f64> {
    if p_drop <= 0.0 {
        return vec![1.0; len];
    }
    if p_drop >= 1.0 {
        return vec![0.0; len];
    }
    let scale = 1.0 / (1.0 - p_drop);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p_drop { 0.0 } else { scale })
        .collect()
}

pub(crate) fn apply_mask(x: &mut Tensor, mask: &[f64]) {
    debug_assert_eq!(x.len(), mask.len());
    for (v, &m) in x.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
}
