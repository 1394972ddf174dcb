//! The five model families and their shared machinery.
//!
//! Every architecture here is fixed: forward passes record exactly the
//! intermediates their hand-written backward passes need, and gradients are
//! exact (they are checked against central finite differences in the test
//! suites). There is no general autodiff.

pub mod cnn;
pub mod dense;
pub mod dnn;
pub mod lstm;
pub mod ops;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::tensor::Tensor;

pub use cnn::{CnnConfig, CnnModel};
pub use dnn::DnnModel;
pub use lstm::{Direction, LstmModel};
pub use ops::{conv1d_backward, conv1d_temporal, maxpool1d, maxpool1d_backward, softmax_nll};

/// Forward-pass mode: training applies dropout, inference is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// The model families compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Dnn,
    Cnn,
    LstmF,
    LstmS,
    BLstmS,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Dnn,
        ModelFamily::Cnn,
        ModelFamily::LstmF,
        ModelFamily::LstmS,
        ModelFamily::BLstmS,
    ];

    /// Frame models classify windowed frames; sample models emit one
    /// prediction per sensor sample.
    pub fn is_sample_model(self) -> bool {
        matches!(self, ModelFamily::LstmS | ModelFamily::BLstmS)
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ModelFamily::Dnn | ModelFamily::Cnn)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelFamily::Dnn => "dnn",
            ModelFamily::Cnn => "cnn",
            ModelFamily::LstmF => "lstm-f",
            ModelFamily::LstmS => "lstm-s",
            ModelFamily::BLstmS => "blstm-s",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelFamily {
    type Err = HarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(ModelFamily::Dnn),
            "cnn" => Ok(ModelFamily::Cnn),
            "lstm-f" => Ok(ModelFamily::LstmF),
            "lstm-s" => Ok(ModelFamily::LstmS),
            "blstm-s" | "b-lstm-s" => Ok(ModelFamily::BLstmS),
            other => Err(HarError::RejectedConfig(format!(
                "unknown model family '{other}'"
            ))),
        }
    }
}

/// Per-layer drop probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub rates: Vec<f64>,
}

impl DropoutSpec {
    pub fn none(layers: usize) -> Self {
        DropoutSpec {
            rates: vec![0.0; layers],
        }
    }

    /// Fully connected hidden layers drop at 0.5.
    pub fn dnn_default(hidden_layers: usize) -> Self {
        DropoutSpec {
            rates: vec![0.5; hidden_layers],
        }
    }

    /// Convolutional blocks drop at 0.1, 0.25 and 0.5 by depth.
    pub fn cnn_blocks(blocks: usize) -> Self {
        DropoutSpec {
            rates: (0..blocks)
                .map(|i| match i {
                    0 => 0.1,
                    1 => 0.25,
                    _ => 0.5,
                })
                .collect(),
        }
    }

    pub fn rate(&self, layer: usize) -> f64 {
        self.rates[layer]
    }
}

/// Glorot-uniform init: +-sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("glorot shape")
}

/// Rescale each column of `w [in x out]` to euclidean length at most `d_in`.
/// Each column is one unit's incoming weight vector.
pub(crate) fn maxin_columns(w: &mut Tensor, d_in: f64) {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    for j in 0..cols {
        let mut norm_sq = 0.0;
        for i in 0..rows {
            let v = w.at2(i, j);
            norm_sq += v * v;
        }
        let norm = norm_sq.sqrt();
        if norm > d_in {
            let s = d_in / norm;
            for i in 0..rows {
                let v = w.at2(i, j);
                w.set2(i, j, v * s);
            }
        }
    }
}

/// Incoming-vector norms, one per column of `w`.
pub(crate) fn column_norms(w: &Tensor, out: &mut Vec<f64>) {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    for j in 0..cols {
        let mut norm_sq = 0.0;
        for i in 0..rows {
            let v = w.at2(i, j);
            norm_sq += v * v;
        }
        out.push(norm_sq.sqrt());
    }
}

/// Shared surface the trainer, the optimiser and checkpointing work against.
pub trait Model {
    fn family(&self) -> ModelFamily;

    /// Parameter tensors in a stable order (gradients use the same order).
    fn parameters(&self) -> Vec<&Tensor>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Stable names aligned with [`Model::parameters`], used by checkpoints.
    fn parameter_names(&self) -> Vec<String>;

    /// Rescale every unit's incoming weight vector to length at most `d_in`.
    /// Biases are untouched.
    fn apply_maxin_norm(&mut self, d_in: f64) -> Result<()>;

    /// Euclidean norms of all incoming weight vectors (one per unit), for
    /// verifying the max-in constraint.
    fn incoming_norms(&self) -> Vec<f64>;

    fn snapshot(&self) -> Vec<Tensor> {
        self.parameters().into_iter().cloned().collect()
    }

    fn restore(&mut self, snapshot: &[Tensor]) {
        let mut params = self.parameters_mut();
        assert_eq!(params.len(), snapshot.len(), "snapshot arity mismatch");
        for (p, s) in params.iter_mut().zip(snapshot) {
            assert_eq!(p.shape(), s.shape(), "snapshot shape mismatch");
            **p = s.clone();
        }
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }
}

pub(crate) fn check_d_in(d_in: f64) -> Result<()> {
    if d_in <= 0.0 || !d_in.is_finite() {
        return Err(HarError::RejectedConfig(format!(
            "max-in norm bound must be positive, got {d_in}"
        )));
    }
    Ok(())
}
