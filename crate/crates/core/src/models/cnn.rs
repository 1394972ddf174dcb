//! Temporal convolutional networks.
//!
//! Each block is a valid stride-1 convolution over all input channels,
//! max-pooling of width 2, then ReLU (pooling output is what gets
//! rectified), then dropout. The flattened block output feeds a fully
//! connected stack identical to the DNN.

use rand::Rng;

use crate::error::{HarError, Result};
use crate::models::dense::Mlp;
use crate::models::ops::{
    apply_mask, conv1d_backward, conv1d_temporal, dropout_mask, maxpool1d, maxpool1d_backward,
    relu_backward_inplace, relu_inplace,
};
use crate::models::{check_d_in, column_norms, glorot, DropoutSpec, Mode, Model, ModelFamily};
use crate::tensor::Tensor;

pub const POOL_WIDTH: usize = 2;

/// Architecture of a CNN: per-block kernel widths and filter counts plus the
/// fully connected tail.
#[derive(Debug, Clone)]
pub struct CnnConfig {
    pub input_samples: usize,
    pub input_channels: usize,
    pub n_classes: usize,
    pub kernel_widths: Vec<usize>,
    pub num_filters: Vec<usize>,
    pub fc_layers: usize,
    pub fc_units: usize,
    /// Dropout after each pooling stage; defaults to 0.1 / 0.25 / 0.5.
    pub block_dropout: DropoutSpec,
    /// Dropout after each fully connected hidden layer.
    pub fc_dropout: f64,
}

impl CnnConfig {
    pub fn new(
        input_samples: usize,
        input_channels: usize,
        n_classes: usize,
        kernel_widths: Vec<usize>,
        num_filters: Vec<usize>,
        fc_layers: usize,
        fc_units: usize,
    ) -> Self {
        let blocks = kernel_widths.len();
        CnnConfig {
            input_samples,
            input_channels,
            n_classes,
            kernel_widths,
            num_filters,
            fc_layers,
            fc_units,
            block_dropout: DropoutSpec::cnn_blocks(blocks),
            fc_dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    kernels: Tensor, // [nF x kW x d_in]
    bias: Tensor,    // [nF]
}

#[derive(Debug, Clone)]
pub struct CnnModel {
    blocks: Vec<ConvBlock>,
    mlp: Mlp,
    cfg: CnnConfig,
    feature_len: usize,
}

impl CnnModel {
    /// Builds the model, verifying the whole conv/pool stack fits the input
    /// length. A stack the frame cannot feed is rejected here, not
    /// mid-training.
    pub fn new<R: Rng>(cfg: CnnConfig, rng: &mut R) -> Result<Self> {
        if cfg.kernel_widths.is_empty() || cfg.kernel_widths.len() > 3 {
            return Err(HarError::RejectedConfig(
                "conv block count must be in 1..=3".into(),
            ));
        }
        if cfg.kernel_widths.len() != cfg.num_filters.len() {
            return Err(HarError::RejectedConfig(
                "kernel widths and filter counts must pair up".into(),
            ));
        }
        if cfg.fc_layers == 0 {
            return Err(HarError::RejectedConfig(
                "at least one fully connected layer is required".into(),
            ));
        }
        if cfg.block_dropout.rates.len() != cfg.kernel_widths.len() {
            return Err(HarError::RejectedConfig(
                "block dropout spec must cover every block".into(),
            ));
        }

        let mut samples = cfg.input_samples;
        let mut channels = cfg.input_channels;
        let mut blocks = Vec::with_capacity(cfg.kernel_widths.len());
        for (b, (&kw, &nf)) in cfg.kernel_widths.iter().zip(&cfg.num_filters).enumerate() {
            if samples < kw {
                return Err(HarError::FrameTooShort(format!(
                    "block {b}: {samples} samples < kernel width {kw}"
                )));
            }
            let conv_len = samples - kw + 1;
            if conv_len < POOL_WIDTH {
                return Err(HarError::FrameTooShort(format!(
                    "block {b}: {conv_len} conv outputs < pool width {POOL_WIDTH}"
                )));
            }
            blocks.push(ConvBlock {
                kernels: glorot(&[nf, kw, channels], kw * channels, nf, rng),
                bias: Tensor::zeros(&[nf]),
            });
            samples = conv_len / POOL_WIDTH;
            channels = nf;
        }
        let feature_len = samples * channels;
        let widths = vec![cfg.fc_units; cfg.fc_layers];
        let mlp = Mlp::new(
            feature_len,
            &widths,
            cfg.n_classes,
            DropoutSpec {
                rates: vec![cfg.fc_dropout; cfg.fc_layers],
            },
            rng,
        );
        Ok(CnnModel {
            blocks,
            mlp,
            cfg,
            feature_len,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    pub fn input_samples(&self) -> usize {
        self.cfg.input_samples
    }

    pub fn input_channels(&self) -> usize {
        self.cfg.input_channels
    }

    /// Flattened length of the conv stack output.
    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    fn check_frame(&self, frame: &Tensor) -> Result<()> {
        if frame.rank() != 2
            || frame.shape()[0] != self.cfg.input_samples
            || frame.shape()[1] != self.cfg.input_channels
        {
            return Err(HarError::ShapeMismatch(format!(
                "frame shape {:?} != [{} x {}]",
                frame.shape(),
                self.cfg.input_samples,
                self.cfg.input_channels
            )));
        }
        Ok(())
    }

    /// Run the conv stack on one frame. Returns the flattened features and,
    /// in train mode, the per-block cache.
    fn conv_stack<R: Rng>(
        &self,
        frame: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, Vec<BlockCache>)> {
        let mut caches = Vec::new();
        let mut cur = frame.clone();
        for (b, block) in self.blocks.iter().enumerate() {
            let conv = conv1d_temporal(&cur, &block.kernels, &block.bias)?;
            let conv_shape = [conv.shape()[0], conv.shape()[1]];
            let (mut pooled, argmax) = maxpool1d(&conv, POOL_WIDTH)?;
            relu_inplace(&mut pooled);
            let activated = pooled.clone();
            let mask = if mode == Mode::Train {
                let m = dropout_mask(pooled.len(), self.cfg.block_dropout.rate(b), rng);
                apply_mask(&mut pooled, &m);
                m
            } else {
                Vec::new()
            };
            caches.push(BlockCache {
                input: cur,
                conv_shape,
                argmax,
                activated,
                mask,
            });
            cur = pooled;
        }
        let features = cur.reshaped(&[self.feature_len])?;
        Ok((features, caches))
    }

    /// Class probabilities for one frame `[s x d]`.
    pub fn forward<R: Rng>(&self, frame: &Tensor, mode: Mode, rng: &mut R) -> Result<Tensor> {
        self.check_frame(frame)?;
        let (features, _) = self.conv_stack(frame, mode, rng)?;
        let x = Tensor::from_vec(&[1, self.feature_len], features.data().to_vec())?;
        let probs = self.mlp.forward(&x, mode, rng);
        Ok(Tensor::vector(probs.row(0)))
    }

    /// Class probabilities for a batch of frames `[B x s x d]`.
    pub fn forward_batch<R: Rng>(&self, frames: &Tensor, mode: Mode, rng: &mut R) -> Result<Tensor> {
        let batch = self.batch_frames(frames)?;
        let mut feats = Tensor::zeros(&[batch.len(), self.feature_len]);
        for (i, frame) in batch.iter().enumerate() {
            let (f, _) = self.conv_stack(frame, mode, rng)?;
            feats.row_mut(i).copy_from_slice(f.data());
        }
        Ok(self.mlp.forward(&feats, mode, rng))
    }

    /// Train-mode forward + backward over a batch `[B x s x d]`.
    pub fn loss_and_grads<R: Rng>(
        &self,
        frames: &Tensor,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor>)> {
        let batch = self.batch_frames(frames)?;
        let mut feats = Tensor::zeros(&[batch.len(), self.feature_len]);
        let mut frame_caches = Vec::with_capacity(batch.len());
        for (i, frame) in batch.iter().enumerate() {
            let (f, cache) = self.conv_stack(frame, Mode::Train, rng)?;
            feats.row_mut(i).copy_from_slice(f.data());
            frame_caches.push(cache);
        }
        let (probs, mlp_cache) = self.mlp.forward_cached(&feats, Mode::Train, rng);
        let (loss, dlogits) = Mlp::nll_and_dlogits(&probs, labels)?;

        let mut grads = self.zero_grads();
        let n_conv = 2 * self.blocks.len();
        let d_feats = self.mlp.backward(&mlp_cache, &dlogits, &mut grads[n_conv..]);

        for (i, caches) in frame_caches.iter().enumerate() {
            let last = caches.last().unwrap();
            let rows = last.conv_shape[0] / POOL_WIDTH;
            let cols = last.conv_shape[1];
            let mut d_cur = Tensor::from_vec(&[rows, cols], d_feats.row(i).to_vec())?;
            for (b, cache) in caches.iter().enumerate().rev() {
                if !cache.mask.is_empty() {
                    apply_mask(&mut d_cur, &cache.mask);
                }
                relu_backward_inplace(&mut d_cur, &cache.activated);
                let d_conv = maxpool1d_backward(&cache.conv_shape, &cache.argmax, &d_cur);
                let (d_input, dk, db) =
                    conv1d_backward(&cache.input, &self.blocks[b].kernels, &d_conv);
                grads[2 * b].add_assign(&dk);
                grads[2 * b + 1].add_assign(&db);
                d_cur = d_input;
            }
        }
        Ok((loss, grads))
    }

    /// Deterministic mean NLL (no dropout) for finite-difference oracles.
    pub fn mean_nll(&self, frames: &Tensor, labels: &[usize]) -> Result<f64> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let probs = self.forward_batch(frames, Mode::Infer, &mut rng)?;
        let (loss, _) = Mlp::nll_and_dlogits(&probs, labels)?;
        Ok(loss)
    }

    fn batch_frames(&self, frames: &Tensor) -> Result<Vec<Tensor>> {
        if frames.rank() != 3
            || frames.shape()[1] != self.cfg.input_samples
            || frames.shape()[2] != self.cfg.input_channels
        {
            return Err(HarError::ShapeMismatch(format!(
                "batch shape {:?} != [B x {} x {}]",
                frames.shape(),
                self.cfg.input_samples,
                self.cfg.input_channels
            )));
        }
        let (s, d) = (self.cfg.input_samples, self.cfg.input_channels);
        let per = s * d;
        Ok((0..frames.shape()[0])
            .map(|i| {
                Tensor::from_vec(&[s, d], frames.data()[i * per..(i + 1) * per].to_vec()).unwrap()
            })
            .collect())
    }

    fn zero_grads(&self) -> Vec<Tensor> {
        let mut grads = Vec::new();
        for block in &self.blocks {
            grads.push(Tensor::zeros(block.kernels.shape()));
            grads.push(Tensor::zeros(block.bias.shape()));
        }
        grads.extend(self.mlp.zero_grads());
        grads
    }
}

struct BlockCache {
    input: Tensor,
    conv_shape: [usize; 2],
    argmax: Vec<usize>,
    activated: Tensor,
    mask: Vec<f64>,
}

impl Model for CnnModel {
    fn family(&self) -> ModelFamily {
        ModelFamily::Cnn
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = Vec::new();
        for block in &self.blocks {
            p.push(&block.kernels);
            p.push(&block.bias);
        }
        p.extend(self.mlp.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = Vec::new();
        for block in &mut self.blocks {
            p.push(&mut block.kernels);
            p.push(&mut block.bias);
        }
        p.extend(self.mlp.parameters_mut());
        p
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for b in 0..self.blocks.len() {
            names.push(format!("block{b}.kernels"));
            names.push(format!("block{b}.bias"));
        }
        names.extend(self.mlp.parameter_names("fc."));
        names
    }

    fn apply_maxin_norm(&mut self, d_in: f64) -> Result<()> {
        check_d_in(d_in)?;
        for block in &mut self.blocks {
            // each filter is one unit; its incoming vector spans kW x d_in
            let (nf, kw, d) = (
                block.kernels.shape()[0],
                block.kernels.shape()[1],
                block.kernels.shape()[2],
            );
            let per = kw * d;
            for f in 0..nf {
                let filter = &mut block.kernels.data_mut()[f * per..(f + 1) * per];
                let norm = filter.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > d_in {
                    let s = d_in / norm;
                    filter.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        for layer in &mut self.mlp.hidden {
            super::maxin_columns(&mut layer.w, d_in);
        }
        super::maxin_columns(&mut self.mlp.out.w, d_in);
        Ok(())
    }

    fn incoming_norms(&self) -> Vec<f64> {
        let mut norms = Vec::new();
        for block in &self.blocks {
            let (nf, kw, d) = (
                block.kernels.shape()[0],
                block.kernels.shape()[1],
                block.kernels.shape()[2],
            );
            let per = kw * d;
            for f in 0..nf {
                let filter = &block.kernels.data()[f * per..(f + 1) * per];
                norms.push(filter.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        for layer in &self.mlp.hidden {
            column_norms(&layer.w, &mut norms);
        }
        column_norms(&self.mlp.out.w, &mut norms);
        norms
    }
}
