//! Parameter update rules: SGD with momentum and inverse-time learning-rate
//! decay, and adagrad.

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::tensor::Tensor;

const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    SgdMomentum,
    Adagrad,
}

/// Optimiser state: hyperparameters plus one slot tensor per parameter
/// (velocity for SGD, squared-gradient accumulator for adagrad).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    decay: f64,
    momentum: f64,
    step: u64,
    slots: Vec<Tensor>,
}

impl OptimizerState {
    pub fn sgd(lr: f64, decay: f64, momentum: f64) -> Result<Self> {
        if lr <= 0.0 || !lr.is_finite() {
            return Err(HarError::RejectedConfig(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(HarError::RejectedConfig(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        if decay < 0.0 {
            return Err(HarError::RejectedConfig("decay must be non-negative".into()));
        }
        Ok(OptimizerState {
            kind: OptimizerKind::SgdMomentum,
            lr,
            decay,
            momentum,
            step: 0,
            slots: Vec::new(),
        })
    }

    pub fn adagrad(lr: f64) -> Result<Self> {
        if lr <= 0.0 || !lr.is_finite() {
            return Err(HarError::RejectedConfig(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(OptimizerState {
            kind: OptimizerKind::Adagrad,
            lr,
            decay: 0.0,
            momentum: 0.0,
            step: 0,
            slots: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Effective learning rate of the upcoming step.
    pub fn current_lr(&self) -> f64 {
        self.lr / (1.0 + self.decay * self.step as f64)
    }

    /// Apply one update. Rejects non-finite gradients with a diagnostic so
    /// the caller can abort the experiment.
    pub fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(HarError::ShapeMismatch(format!(
                "{} parameters vs {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params[i].shape() {
                return Err(HarError::ShapeMismatch(format!(
                    "gradient {i}: {:?} vs parameter {:?}",
                    g.shape(),
                    params[i].shape()
                )));
            }
            if !g.all_finite() {
                return Err(HarError::Numeric(format!(
                    "non-finite gradient in parameter {i} at step {}",
                    self.step
                )));
            }
        }
        if self.slots.is_empty() {
            self.slots = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }

        match self.kind {
            OptimizerKind::SgdMomentum => {
                let lr_t = self.current_lr();
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    for ((pv, &gv), vv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut())
                    {
                        *vv = self.momentum * *vv - lr_t * gv;
                        *pv += *vv;
                    }
                }
            }
            OptimizerKind::Adagrad => {
                for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    for ((pv, &gv), av) in
                        p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut())
                    {
                        *av += gv * gv;
                        *pv -= self.lr * gv / (av.sqrt() + ADAGRAD_EPS);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
