//! The full train/validate/early-stop pipeline for all five families.
//!
//! Frame models (DNN, CNN) train on stratified 64-frame mini-batches with
//! SGD + momentum; recurrent models train with adagrad on parallel streams
//! (LSTM-F over the frame sequence, LSTM-S over raw samples, with carry-over
//! state regularisation) or on whole segments (b-LSTM-S). The max-in norm
//! constraint is applied after every update. Validation mean F1 drives the
//! 30/300/patience-10 stop rule; the best-validation checkpoint is returned
//! and applied to the test set.

pub mod optimizer;
pub mod protocol;
pub mod sequence;
pub mod stratified;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FrameDataset, HarDataset, SequenceDataset};
use crate::error::{HarError, Result};
use crate::hypersearch::Hyperparameters;
use crate::metrics::{mean_f1_with, weighted_f1_with, ConfusionMatrix, F1Variant};
use crate::models::{
    CnnConfig, CnnModel, Direction, DnnModel, DropoutSpec, LstmModel, Mode, Model, ModelFamily,
};
use crate::tensor::Tensor;

pub use optimizer::{OptimizerKind, OptimizerState};
pub use protocol::{run_protocol, ProtocolOutcome, TrainProtocol};
pub use sequence::{FrameSeqStream, SampleStream, SequenceBatch, SequenceBatcher, SegmentBatcher};
pub use stratified::{StratifiedBatcher, DEFAULT_BATCH};

/// Scoring options threaded through validation and test evaluation.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub variant: F1Variant,
    /// Class excluded from the mean-F1 average (the background class, when
    /// the caller wants it out).
    pub exclude_class: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: Hyperparameters,
    pub protocol: TrainProtocol,
    pub seed: u64,
    #[serde(default)]
    pub eval: EvalOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    Ok,
    Diverged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mean_f1: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestScores {
    /// Primary granularity: frames for frame models, samples for sample
    /// models.
    pub mean_f1: f64,
    pub weighted_f1: f64,
    /// Sample models are additionally scored per frame (majority vote of
    /// the window's predicted sample labels).
    pub frame_mean_f1: Option<f64>,
    pub frame_weighted_f1: Option<f64>,
}

/// A trained model of any family.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Dnn(DnnModel),
    Cnn(CnnModel),
    Lstm(LstmModel),
}

impl AnyModel {
    pub fn as_model(&self) -> &dyn Model {
        match self {
            AnyModel::Dnn(m) => m,
            AnyModel::Cnn(m) => m,
            AnyModel::Lstm(m) => m,
        }
    }

    pub fn as_model_mut(&mut self) -> &mut dyn Model {
        match self {
            AnyModel::Dnn(m) => m,
            AnyModel::Cnn(m) => m,
            AnyModel::Lstm(m) => m,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub family: ModelFamily,
    pub model: AnyModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub status: TrainStatus,
    /// Test scores of the best-validation checkpoint; absent for diverged
    /// runs.
    pub test: Option<TestScores>,
}

/// Train one model; see [`train_observed`] for the hook variant.
pub fn train(family: ModelFamily, data: &HarDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(family, data, cfg, &mut |_| {})
}

/// Train one model, invoking `observer` after every optimisation step (the
/// max-in norm constraint has already been applied when it runs).
pub fn train_observed(
    family: ModelFamily,
    data: &HarDataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&dyn Model),
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match family {
        ModelFamily::Dnn => FrameTrainer::new_dnn(data, cfg, &mut rng)?.run(data, cfg, rng, observer),
        ModelFamily::Cnn => FrameTrainer::new_cnn(data, cfg, &mut rng)?.run(data, cfg, rng, observer),
        ModelFamily::LstmF | ModelFamily::LstmS => {
            SeqTrainer::new(family, data, cfg, &mut rng)?.run(data, cfg, rng, observer)
        }
        ModelFamily::BLstmS => {
            BiTrainer::new(data, cfg, &mut rng)?.run(data, cfg, rng, observer)
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn scores_from(cm: &ConfusionMatrix, eval: &EvalOptions) -> Result<(f64, f64)> {
    Ok((
        mean_f1_with(cm, eval.variant, eval.exclude_class)?,
        weighted_f1_with(cm, eval.variant, eval.exclude_class)?,
    ))
}

/// Wrap a training-step error: numeric failures mark the run diverged
/// instead of failing the caller.
fn diverged(err: &HarError) -> bool {
    matches!(err, HarError::Numeric(_))
}

// ---------------------------------------------------------------------------
// frame models (DNN / CNN)
// ---------------------------------------------------------------------------

enum FrameModel {
    Dnn(DnnModel),
    Cnn(CnnModel),
}

struct FrameTrainer {
    model: FrameModel,
    opt: OptimizerState,
    batcher: StratifiedBatcher,
    max_in: f64,
}

impl FrameTrainer {
    fn new_dnn(data: &HarDataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let h = &cfg.hyper;
        let input_dim = data.train_frames.flat_len();
        let model = DnnModel::new(
            input_dim,
            data.n_classes(),
            h.layers,
            h.units,
            DropoutSpec::dnn_default(h.layers),
            rng,
        )?;
        Ok(FrameTrainer {
            model: FrameModel::Dnn(model),
            opt: OptimizerState::sgd(h.lr, h.lr_decay, h.momentum)?,
            batcher: StratifiedBatcher::new(&data.train_frames, DEFAULT_BATCH)?,
            max_in: h.max_in_norm,
        })
    }

    fn new_cnn(data: &HarDataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let h = &cfg.hyper;
        let conv = h.conv_layers.max(1);
        let model = CnnModel::new(
            CnnConfig::new(
                data.window,
                data.channels(),
                data.n_classes(),
                h.kernel_widths[..conv].to_vec(),
                h.num_filters[..conv].to_vec(),
                h.layers,
                h.units,
            ),
            rng,
        )?;
        Ok(FrameTrainer {
            model: FrameModel::Cnn(model),
            opt: OptimizerState::sgd(h.lr, h.lr_decay, h.momentum)?,
            batcher: StratifiedBatcher::new(&data.train_frames, DEFAULT_BATCH)?,
            max_in: h.max_in_norm,
        })
    }

    fn model(&self) -> &dyn Model {
        match &self.model {
            FrameModel::Dnn(m) => m,
            FrameModel::Cnn(m) => m,
        }
    }

    fn gather_flat(frames: &FrameDataset, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let flat = frames.flat_len();
        let mut x = Tensor::zeros(&[idx.len(), flat]);
        let mut labels = Vec::with_capacity(idx.len());
        for (r, &f) in idx.iter().enumerate() {
            frames.copy_frame_into(f, x.row_mut(r));
            labels.push(frames.label(f));
        }
        (x, labels)
    }

    fn gather_shaped(frames: &FrameDataset, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let (s, d) = (frames.window(), frames.channels());
        let mut x = Tensor::zeros(&[idx.len(), s, d]);
        let per = s * d;
        let mut labels = Vec::with_capacity(idx.len());
        for (r, &f) in idx.iter().enumerate() {
            frames.copy_frame_into(f, &mut x.data_mut()[r * per..(r + 1) * per]);
            labels.push(frames.label(f));
        }
        (x, labels)
    }

    fn run_epoch(
        &mut self,
        data: &HarDataset,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn FnMut(&dyn Model),
    ) -> Result<f64> {
        let frames = &data.train_frames;
        let batches = self.batcher.batches_per_epoch(frames.len());
        let mut loss_sum = 0.0;
        for _ in 0..batches {
            let idx = self.batcher.next_batch(rng);
            let loss = match &mut self.model {
                FrameModel::Dnn(model) => {
                    let (x, labels) = Self::gather_flat(frames, &idx);
                    let (loss, grads) = model.loss_and_grads(&x, &labels, rng)?;
                    self.opt.apply(&mut model.parameters_mut(), &grads)?;
                    model.apply_maxin_norm(self.max_in)?;
                    loss
                }
                FrameModel::Cnn(model) => {
                    let (x, labels) = Self::gather_shaped(frames, &idx);
                    let (loss, grads) = model.loss_and_grads(&x, &labels, rng)?;
                    self.opt.apply(&mut model.parameters_mut(), &grads)?;
                    model.apply_maxin_norm(self.max_in)?;
                    loss
                }
            };
            if !loss.is_finite() {
                return Err(HarError::Numeric(format!("non-finite training loss {loss}")));
            }
            observer(self.model());
            loss_sum += loss;
        }
        Ok(loss_sum / batches as f64)
    }

    fn predict_frames(&self, frames: &FrameDataset) -> Result<Vec<usize>> {
        let mut preds = Vec::with_capacity(frames.len());
        let mut silent = ChaCha8Rng::seed_from_u64(0);
        let chunk = 256;
        let mut idx = Vec::with_capacity(chunk);
        let mut start = 0;
        while start < frames.len() {
            let end = (start + chunk).min(frames.len());
            idx.clear();
            idx.extend(start..end);
            let probs = match &self.model {
                FrameModel::Dnn(model) => {
                    let (x, _) = Self::gather_flat(frames, &idx);
                    model.forward_batch(&x, Mode::Infer, &mut silent)?
                }
                FrameModel::Cnn(model) => {
                    let (x, _) = Self::gather_shaped(frames, &idx);
                    model.forward_batch(&x, Mode::Infer, &mut silent)?
                }
            };
            for r in 0..probs.shape()[0] {
                preds.push(argmax(probs.row(r)));
            }
            start = end;
        }
        Ok(preds)
    }

    fn validate(&self, data: &HarDataset, eval: &EvalOptions) -> Result<f64> {
        let preds = self.predict_frames(&data.val_frames)?;
        let cm = frame_confusion(&data.val_frames, &preds)?;
        mean_f1_with(&cm, eval.variant, eval.exclude_class)
    }

    fn run(
        mut self,
        data: &HarDataset,
        cfg: &TrainConfig,
        mut rng: ChaCha8Rng,
        observer: &mut dyn FnMut(&dyn Model),
    ) -> Result<TrainOutcome> {
        let family = self.model().family();
        let mut history = Vec::new();
        let mut best: Option<(f64, Vec<Tensor>)> = None;
        let outcome = run_protocol(&cfg.protocol, |epoch| {
            let t0 = Instant::now();
            let train_loss = self.run_epoch(data, &mut rng, observer)?;
            let val = self.validate(data, &cfg.eval)?;
            history.push(EpochRecord {
                epoch,
                train_loss,
                val_mean_f1: val,
                wall_secs: t0.elapsed().as_secs_f64(),
            });
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, self.model().snapshot()));
            }
            Ok(val)
        });
        let status = match outcome {
            Ok(_) => TrainStatus::Ok,
            Err(ref e) if diverged(e) => TrainStatus::Diverged,
            Err(e) => return Err(e),
        };
        let best_epoch = history
            .iter()
            .fold((0usize, f64::NEG_INFINITY), |acc, r| {
                if r.val_mean_f1 > acc.1 {
                    (r.epoch, r.val_mean_f1)
                } else {
                    acc
                }
            })
            .0;
        if let Some((_, snap)) = &best {
            match &mut self.model {
                FrameModel::Dnn(m) => m.restore(snap),
                FrameModel::Cnn(m) => m.restore(snap),
            }
        }
        let test = if status == TrainStatus::Ok {
            let preds = self.predict_frames(&data.test_frames)?;
            let cm = frame_confusion(&data.test_frames, &preds)?;
            let (fm, fw) = scores_from(&cm, &cfg.eval)?;
            Some(TestScores {
                mean_f1: fm,
                weighted_f1: fw,
                frame_mean_f1: None,
                frame_weighted_f1: None,
            })
        } else {
            None
        };
        Ok(TrainOutcome {
            family,
            model: match self.model {
                FrameModel::Dnn(m) => AnyModel::Dnn(m),
                FrameModel::Cnn(m) => AnyModel::Cnn(m),
            },
            history,
            best_epoch,
            status,
            test,
        })
    }
}

fn frame_confusion(frames: &FrameDataset, preds: &[usize]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(frames.n_classes());
    for (i, &p) in preds.iter().enumerate() {
        cm.accumulate(frames.label(i), p)?;
    }
    Ok(cm)
}

// ---------------------------------------------------------------------------
// carried-state recurrent models (LSTM-F / LSTM-S)
// ---------------------------------------------------------------------------

struct SeqTrainer {
    family: ModelFamily,
    model: LstmModel,
    opt: OptimizerState,
    batcher: SequenceBatcher,
    state: crate::models::lstm::LstmState,
    max_in: f64,
}

const STREAMS: usize = 64;

impl SeqTrainer {
    fn new(
        family: ModelFamily,
        data: &HarDataset,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let h = &cfg.hyper;
        let (input_dim, stream_len) = match family {
            ModelFamily::LstmF => (data.train_frames.flat_len(), data.train_frames.len()),
            _ => (data.channels(), data.train.len()),
        };
        let model = LstmModel::new(
            input_dim,
            data.n_classes(),
            h.layers,
            h.units,
            Direction::Forward,
            rng,
        )?;
        let batcher = SequenceBatcher::new(STREAMS, h.unroll, h.p_carry, stream_len, rng)?;
        let state = model.zero_state(STREAMS);
        Ok(SeqTrainer {
            family,
            model,
            opt: OptimizerState::adagrad(h.lr)?,
            batcher,
            state,
            max_in: h.max_in_norm,
        })
    }

    fn run_epoch(
        &mut self,
        data: &HarDataset,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn FnMut(&dyn Model),
    ) -> Result<f64> {
        let stream_len = match self.family {
            ModelFamily::LstmF => data.train_frames.len(),
            _ => data.train.len(),
        };
        let batches = self.batcher.batches_per_epoch(stream_len);
        let mut loss_sum = 0.0;
        for _ in 0..batches {
            let batch = match self.family {
                ModelFamily::LstmF => {
                    let stream = FrameSeqStream::new(&data.train_frames);
                    self.batcher.next_batch(&stream, rng)
                }
                _ => self.batcher.next_batch(data.train.as_ref(), rng),
            };
            for (s, &reset) in batch.reset.iter().enumerate() {
                if reset {
                    self.state.reset_stream(s);
                }
            }
            let (loss, grads) = self.model.loss_and_grads(
                &batch.inputs,
                &batch.targets,
                &mut self.state,
                Some(&batch.boundary),
            )?;
            if !loss.is_finite() {
                return Err(HarError::Numeric(format!("non-finite training loss {loss}")));
            }
            self.opt.apply(&mut self.model.parameters_mut(), &grads)?;
            self.model.apply_maxin_norm(self.max_in)?;
            observer(&self.model);
            loss_sum += loss;
        }
        Ok(loss_sum / batches as f64)
    }

    fn validate(&self, data: &HarDataset, eval: &EvalOptions) -> Result<f64> {
        match self.family {
            ModelFamily::LstmF => {
                let stream = FrameSeqStream::new(&data.val_frames);
                let preds = predict_stream(&self.model, &stream)?;
                let cm = frame_confusion(&data.val_frames, &preds)?;
                mean_f1_with(&cm, eval.variant, eval.exclude_class)
            }
            _ => {
                let preds = predict_stream(&self.model, data.val.as_ref())?;
                let cm = stream_confusion(data.val.as_ref(), &preds)?;
                mean_f1_with(&cm, eval.variant, eval.exclude_class)
            }
        }
    }

    fn run(
        mut self,
        data: &HarDataset,
        cfg: &TrainConfig,
        mut rng: ChaCha8Rng,
        observer: &mut dyn FnMut(&dyn Model),
    ) -> Result<TrainOutcome> {
        let mut history = Vec::new();
        let mut best: Option<(f64, Vec<Tensor>)> = None;
        let outcome = run_protocol(&cfg.protocol, |epoch| {
            let t0 = Instant::now();
            let train_loss = self.run_epoch(data, &mut rng, observer)?;
            let val = self.validate(data, &cfg.eval)?;
            history.push(EpochRecord {
                epoch,
                train_loss,
                val_mean_f1: val,
                wall_secs: t0.elapsed().as_secs_f64(),
            });
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, self.model.snapshot()));
            }
            Ok(val)
        });
        let status = match outcome {
            Ok(_) => TrainStatus::Ok,
            Err(ref e) if diverged(e) => TrainStatus::Diverged,
            Err(e) => return Err(e),
        };
        let best_epoch = history
            .iter()
            .fold((0usize, f64::NEG_INFINITY), |acc, r| {
                if r.val_mean_f1 > acc.1 {
                    (r.epoch, r.val_mean_f1)
                } else {
                    acc
                }
            })
            .0;
        if let Some((_, snap)) = &best {
            self.model.restore(snap);
        }
        let test = if status == TrainStatus::Ok {
            Some(match self.family {
                ModelFamily::LstmF => {
                    let stream = FrameSeqStream::new(&data.test_frames);
                    let preds = predict_stream(&self.model, &stream)?;
                    let cm = frame_confusion(&data.test_frames, &preds)?;
                    let (fm, fw) = scores_from(&cm, &cfg.eval)?;
                    TestScores {
                        mean_f1: fm,
                        weighted_f1: fw,
                        frame_mean_f1: None,
                        frame_weighted_f1: None,
                    }
                }
                _ => {
                    let preds = predict_stream(&self.model, data.test.as_ref())?;
                    sample_test_scores(data, &preds, &cfg.eval)?
                }
            })
        } else {
            None
        };
        Ok(TrainOutcome {
            family: self.family,
            model: AnyModel::Lstm(self.model),
            history,
            best_epoch,
            status,
            test,
        })
    }
}

/// Stateful single-stream prediction over an ordered sample stream, state
/// zeroed at recording starts, processed in fixed-size chunks.
fn predict_stream(model: &LstmModel, stream: &dyn SampleStream) -> Result<Vec<usize>> {
    const CHUNK: usize = 256;
    let mut preds = Vec::with_capacity(stream.len());
    let mut state = model.zero_state(1);
    let mut start = 0;
    while start < stream.len() {
        let end = (start + CHUNK).min(stream.len());
        let mut inputs = Vec::with_capacity(end - start);
        let mut boundary = Vec::with_capacity(end - start);
        for idx in start..end {
            let mut x = Tensor::zeros(&[1, stream.dim()]);
            stream.copy_into(idx, x.row_mut(0));
            inputs.push(x);
            boundary.push(vec![stream.is_boundary(idx)]);
        }
        let probs = model.forward_batch(&inputs, &mut state, Some(&boundary))?;
        for p in probs {
            preds.push(argmax(p.row(0)));
        }
        start = end;
    }
    Ok(preds)
}

fn stream_confusion(seq: &SequenceDataset, preds: &[usize]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(seq.n_classes());
    for (i, &p) in preds.iter().enumerate() {
        cm.accumulate(seq.label(i), p)?;
    }
    Ok(cm)
}

/// Per-sample scores plus the frame-level view (window majority vote over
/// predicted sample labels).
fn sample_test_scores(
    data: &HarDataset,
    preds: &[usize],
    eval: &EvalOptions,
) -> Result<TestScores> {
    let cm = stream_confusion(data.test.as_ref(), preds)?;
    let (fm, fw) = scores_from(&cm, eval)?;
    let frames = &data.test_frames;
    let mut fcm = ConfusionMatrix::new(frames.n_classes());
    for i in 0..frames.len() {
        let start = frames.start(i);
        let mut counts = vec![0usize; frames.n_classes()];
        for t in start..start + frames.window() {
            counts[preds[t]] += 1;
        }
        let best = *counts.iter().max().unwrap();
        let last = preds[start + frames.window() - 1];
        let vote = if counts[last] == best {
            last
        } else {
            counts.iter().position(|&c| c == best).unwrap()
        };
        fcm.accumulate(frames.label(i), vote)?;
    }
    let (ffm, ffw) = scores_from(&fcm, eval)?;
    Ok(TestScores {
        mean_f1: fm,
        weighted_f1: fw,
        frame_mean_f1: Some(ffm),
        frame_weighted_f1: Some(ffw),
    })
}

// ---------------------------------------------------------------------------
// bidirectional segments (b-LSTM-S)
// ---------------------------------------------------------------------------

struct BiTrainer {
    model: LstmModel,
    opt: OptimizerState,
    batcher: SegmentBatcher,
    unroll: usize,
    max_in: f64,
}

impl BiTrainer {
    fn new(data: &HarDataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let h = &cfg.hyper;
        let model = LstmModel::new(
            data.channels(),
            data.n_classes(),
            h.layers,
            h.units,
            Direction::Bidirectional,
            rng,
        )?;
        Ok(BiTrainer {
            model,
            opt: OptimizerState::adagrad(h.lr)?,
            batcher: SegmentBatcher::new(data.train.as_ref(), h.unroll)?,
            unroll: h.unroll,
            max_in: h.max_in_norm,
        })
    }

    fn run_epoch(
        &mut self,
        data: &HarDataset,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn FnMut(&dyn Model),
    ) -> Result<f64> {
        let batches = self.batcher.batches_per_epoch(STREAMS);
        let mut loss_sum = 0.0;
        for _ in 0..batches {
            let (inputs, targets) = self.batcher.next_batch(data.train.as_ref(), STREAMS, rng);
            let (loss, grads) = self.model.bilstm_loss_and_grads(&inputs, &targets)?;
            if !loss.is_finite() {
                return Err(HarError::Numeric(format!("non-finite training loss {loss}")));
            }
            self.opt.apply(&mut self.model.parameters_mut(), &grads)?;
            self.model.apply_maxin_norm(self.max_in)?;
            observer(&self.model);
            loss_sum += loss;
        }
        Ok(loss_sum / batches as f64)
    }

    fn run(
        mut self,
        data: &HarDataset,
        cfg: &TrainConfig,
        mut rng: ChaCha8Rng,
        observer: &mut dyn FnMut(&dyn Model),
    ) -> Result<TrainOutcome> {
        let mut history = Vec::new();
        let mut best: Option<(f64, Vec<Tensor>)> = None;
        let outcome = run_protocol(&cfg.protocol, |epoch| {
            let t0 = Instant::now();
            let train_loss = self.run_epoch(data, &mut rng, observer)?;
            let preds = predict_bilstm(&self.model, data.val.as_ref(), self.unroll)?;
            let cm = stream_confusion(data.val.as_ref(), &preds)?;
            let val = mean_f1_with(&cm, cfg.eval.variant, cfg.eval.exclude_class)?;
            history.push(EpochRecord {
                epoch,
                train_loss,
                val_mean_f1: val,
                wall_secs: t0.elapsed().as_secs_f64(),
            });
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, self.model.snapshot()));
            }
            Ok(val)
        });
        let status = match outcome {
            Ok(_) => TrainStatus::Ok,
            Err(ref e) if diverged(e) => TrainStatus::Diverged,
            Err(e) => return Err(e),
        };
        let best_epoch = history
            .iter()
            .fold((0usize, f64::NEG_INFINITY), |acc, r| {
                if r.val_mean_f1 > acc.1 {
                    (r.epoch, r.val_mean_f1)
                } else {
                    acc
                }
            })
            .0;
        if let Some((_, snap)) = &best {
            self.model.restore(snap);
        }
        let test = if status == TrainStatus::Ok {
            let preds = predict_bilstm(&self.model, data.test.as_ref(), self.unroll)?;
            Some(sample_test_scores(data, &preds, &cfg.eval)?)
        } else {
            None
        };
        Ok(TrainOutcome {
            family: ModelFamily::BLstmS,
            model: AnyModel::Lstm(self.model),
            history,
            best_epoch,
            status,
            test,
        })
    }
}

/// Offline per-sample prediction: each recording is scored in consecutive
/// length-`unroll` segments with zero initial states; the tail reuses the
/// last full window (or the whole recording when shorter).
fn predict_bilstm(
    model: &LstmModel,
    seq: &SequenceDataset,
    unroll: usize,
) -> Result<Vec<usize>> {
    let mut preds = vec![0usize; seq.len()];
    for rec in seq.recordings() {
        let mut segment = |start: usize, len: usize, emit_from: usize| -> Result<()> {
            let mut inputs = Vec::with_capacity(len);
            for t in 0..len {
                let mut x = Tensor::zeros(&[1, seq.channels()]);
                x.row_mut(0).copy_from_slice(seq.sample(start + t));
                inputs.push(x);
            }
            let probs = model.bilstm_forward_batch(&inputs)?;
            for (t, p) in probs.iter().enumerate().skip(emit_from) {
                preds[start + t] = argmax(p.row(0));
            }
            Ok(())
        };
        if rec.len <= unroll {
            segment(rec.start, rec.len, 0)?;
            continue;
        }
        let full = rec.len / unroll;
        for k in 0..full {
            segment(rec.start + k * unroll, unroll, 0)?;
        }
        let tail = rec.len % unroll;
        if tail > 0 {
            // last window overlaps; emit only the uncovered tail
            segment(rec.start + rec.len - unroll, unroll, unroll - tail)?;
        }
    }
    Ok(preds)
}
