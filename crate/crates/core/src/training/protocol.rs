//! The train/validate/early-stop protocol.
//!
//! Models train for at least `min_epochs` and at most `max_epochs`; past the
//! minimum, training stops once validation performance has not increased
//! for `patience` consecutive epochs. The epoch with the best validation
//! score is the selected model.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProtocol {
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainProtocol {
    fn default() -> Self {
        TrainProtocol {
            min_epochs: 30,
            max_epochs: 300,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOutcome {
    pub epochs_run: usize,
    /// 1-based epoch with the best validation score (first on ties).
    pub best_epoch: usize,
    pub best_score: f64,
}

/// Drive epochs until the stop rule fires. `run_epoch` trains one epoch and
/// returns the validation score; errors abort immediately.
pub fn run_protocol<F>(protocol: &TrainProtocol, mut run_epoch: F) -> Result<ProtocolOutcome>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 1..=protocol.max_epochs {
        let score = run_epoch(epoch)?;
        epochs_run = epoch;
        if score > best_score {
            best_score = score;
            best_epoch = epoch;
        }
        // stagnation is counted from the later of the best epoch and the
        // minimum-epochs mark
        if epoch >= protocol.min_epochs
            && epoch - best_epoch.max(protocol.min_epochs) >= protocol.patience
        {
            break;
        }
    }
    Ok(ProtocolOutcome {
        epochs_run,
        best_epoch,
        best_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_curve(curve: impl Fn(usize) -> f64) -> ProtocolOutcome {
        run_protocol(&TrainProtocol::default(), |e| Ok(curve(e))).unwrap()
    }

    #[test]
    fn flat_curve_stops_at_forty() {
        let out = run_curve(|_| 0.5);
        assert_eq!(out.epochs_run, 40);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn peak_at_forty_stops_at_fifty() {
        let out = run_curve(|e| if e <= 40 { e as f64 } else { 40.0 });
        assert_eq!(out.epochs_run, 50);
        assert_eq!(out.best_epoch, 40);
    }

    #[test]
    fn monotone_rise_runs_to_the_cap() {
        let out = run_curve(|e| e as f64);
        assert_eq!(out.epochs_run, 300);
        assert_eq!(out.best_epoch, 300);
    }

    #[test]
    fn early_peak_still_honours_the_minimum() {
        // peak at epoch 5, then flat: stagnant long before epoch 30, so the
        // stop fires at min_epochs + patience
        let out = run_curve(|e| if e == 5 { 1.0 } else { 0.1 });
        assert_eq!(out.epochs_run, 40);
        assert_eq!(out.best_epoch, 5);
    }

    #[test]
    fn cap_below_the_floor_wins() {
        let protocol = TrainProtocol {
            min_epochs: 30,
            max_epochs: 25,
            patience: 10,
        };
        let out = run_protocol(&protocol, |_| Ok(0.5)).unwrap();
        assert_eq!(out.epochs_run, 25);
    }

    #[test]
    fn ties_keep_the_first_best_epoch() {
        let out = run_curve(|e| if e >= 20 { 0.9 } else { 0.1 });
        assert_eq!(out.best_epoch, 20);
        assert_eq!(out.epochs_run, 40);
    }

    #[test]
    fn errors_abort() {
        let err = run_protocol(&TrainProtocol::default(), |e| {
            if e == 3 {
                Err(crate::error::HarError::Numeric("boom".into()))
            } else {
                Ok(0.1)
            }
        });
        assert!(err.is_err());
    }
}
