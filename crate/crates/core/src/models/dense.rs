//! Affine layers and the fully connected stack shared by the DNN and the
//! convolutional models' classifier head.

use rand::Rng;

use crate::error::Result;
use crate::models::ops::{
    apply_mask, dropout_mask, relu_backward_inplace, relu_inplace, softmax_rows,
};
use crate::models::{glorot, DropoutSpec, Mode};
use crate::tensor::{add_bias_rows, col_sums_acc, matmul_a_bt_acc, matmul_at_b_acc, matmul_into, Tensor};

/// One affine layer, `y = x W + b`, with `w` stored `[in x out]` so each
/// column is a unit's incoming weight vector.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn new<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Dense {
            w: glorot(&[fan_in, fan_out], fan_in, fan_out, rng),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(&[x.shape()[0], self.w.shape()[1]]);
        matmul_into(x, &self.w, &mut out);
        add_bias_rows(&mut out, &self.b);
        out
    }

    /// Accumulates `dw`/`db` and returns the input gradient.
    pub fn backward(&self, x: &Tensor, d_out: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Tensor {
        matmul_at_b_acc(x, d_out, dw);
        col_sums_acc(d_out, db);
        let mut dx = Tensor::zeros(&[x.shape()[0], x.shape()[1]]);
        matmul_a_bt_acc(d_out, &self.w, &mut dx);
        dx
    }
}

/// ReLU hidden layers plus a softmax head. Dropout (inverted) is applied to
/// each hidden layer's activations in train mode.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Vec<Dense>,
    pub out: Dense,
    pub dropout: DropoutSpec,
}

pub struct MlpCache {
    /// Input to each hidden layer (index 0 is the network input), plus the
    /// final hidden output feeding the head.
    layer_inputs: Vec<Tensor>,
    /// Post-ReLU activations per hidden layer (the ReLU backward mask).
    activations: Vec<Tensor>,
    masks: Vec<Vec<f64>>,
    probs: Tensor,
}

impl MlpCache {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }
}

impl Mlp {
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden_units: &[usize],
        n_classes: usize,
        dropout: DropoutSpec,
        rng: &mut R,
    ) -> Self {
        assert_eq!(dropout.rates.len(), hidden_units.len());
        let mut hidden = Vec::with_capacity(hidden_units.len());
        let mut fan_in = input_dim;
        for &u in hidden_units {
            hidden.push(Dense::new(fan_in, u, rng));
            fan_in = u;
        }
        let out = Dense::new(fan_in, n_classes, rng);
        Mlp { hidden, out, dropout }
    }

    /// Class probabilities for a batch `[B x in]`.
    pub fn forward<R: Rng>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> Tensor {
        let (probs, _) = self.forward_cached(x, mode, rng);
        probs
    }

    pub fn forward_cached<R: Rng>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> (Tensor, MlpCache) {
        let mut layer_inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut activations = Vec::with_capacity(self.hidden.len());
        let mut masks = Vec::with_capacity(self.hidden.len());
        let mut cur = x.clone();
        for (l, layer) in self.hidden.iter().enumerate() {
            layer_inputs.push(cur.clone());
            let mut z = layer.forward(&cur);
            relu_inplace(&mut z);
            activations.push(z.clone());
            if mode == Mode::Train {
                let mask = dropout_mask(z.len(), self.dropout.rate(l), rng);
                apply_mask(&mut z, &mask);
                masks.push(mask);
            }
            cur = z;
        }
        layer_inputs.push(cur);
        let mut logits = self.out.forward(layer_inputs.last().unwrap());
        softmax_rows(&mut logits);
        let probs = logits;
        (
            probs.clone(),
            MlpCache {
                layer_inputs,
                activations,
                masks,
                probs,
            },
        )
    }

    /// Mean NLL over the batch plus the gradient seed for the backward pass.
    pub fn nll_and_dlogits(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
        let b = probs.shape()[0];
        let c = probs.shape()[1];
        debug_assert_eq!(labels.len(), b);
        let mut loss = 0.0;
        let mut dlogits = probs.clone();
        let inv = 1.0 / b as f64;
        for (i, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(crate::error::HarError::RejectedInput(format!(
                    "label {label} out of range for {c} classes"
                )));
            }
            loss -= probs.at2(i, label).max(f64::MIN_POSITIVE).ln();
            let row = dlogits.row_mut(i);
            row[label] -= 1.0;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        Ok((loss * inv, dlogits))
    }

    /// Backward from `dlogits`; gradients are appended to `grads` in
    /// parameter order. Returns the gradient w.r.t. the network input.
    pub fn backward(&self, cache: &MlpCache, dlogits: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let n_hidden = self.hidden.len();
        debug_assert_eq!(grads.len(), 2 * (n_hidden + 1));
        let (hidden_grads, out_grads) = grads.split_at_mut(2 * n_hidden);
        let (dw_out, db_out) = out_grads.split_at_mut(1);
        let mut d_cur = self.out.backward(
            cache.layer_inputs.last().unwrap(),
            dlogits,
            &mut dw_out[0],
            &mut db_out[0],
        );
        for l in (0..n_hidden).rev() {
            if !cache.masks.is_empty() {
                apply_mask(&mut d_cur, &cache.masks[l]);
            }
            relu_backward_inplace(&mut d_cur, &cache.activations[l]);
            let (dw, db) = {
                let pair = &mut hidden_grads[2 * l..2 * l + 2];
                let (a, b) = pair.split_at_mut(1);
                (a, b)
            };
            d_cur = self.hidden[l].backward(&cache.layer_inputs[l], &d_cur, &mut dw[0], &mut db[0]);
        }
        d_cur
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        let mut grads = Vec::with_capacity(2 * (self.hidden.len() + 1));
        for layer in &self.hidden {
            grads.push(Tensor::zeros(layer.w.shape()));
            grads.push(Tensor::zeros(layer.b.shape()));
        }
        grads.push(Tensor::zeros(self.out.w.shape()));
        grads.push(Tensor::zeros(self.out.b.shape()));
        grads
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut p = Vec::new();
        for layer in &self.hidden {
            p.push(&layer.w);
            p.push(&layer.b);
        }
        p.push(&self.out.w);
        p.push(&self.out.b);
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = Vec::new();
        for layer in &mut self.hidden {
            p.push(&mut layer.w);
            p.push(&mut layer.b);
        }
        p.push(&mut self.out.w);
        p.push(&mut self.out.b);
        p
    }

    pub fn parameter_names(&self, prefix: &str) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.hidden.len() {
            names.push(format!("{prefix}hidden{l}.w"));
            names.push(format!("{prefix}hidden{l}.b"));
        }
        names.push(format!("{prefix}out.w"));
        names.push(format!("{prefix}out.b"));
        names
    }
}
