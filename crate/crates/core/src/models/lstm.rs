//! LSTM networks in the vanilla (no peephole) variant.
//!
//! Three usages share this type: frame sequences (LSTM-F), raw sample
//! sequences (LSTM-S) and bidirectional sample sequences (b-LSTM-S). A
//! shared softmax head maps the top layer's hidden state (for bidirectional
//! models, the concatenation of both tracks) to class probabilities at every
//! timestep.
//!
//! Backpropagation through time is exact within a mini-batch window;
//! gradients never flow across batch boundaries even when hidden state is
//! carried over.

use rand::Rng;

use crate::error::{HarError, Result};
use crate::models::dense::Dense;
use crate::models::ops::softmax_rows;
use crate::models::{check_d_in, column_norms, glorot, maxin_columns, Model, ModelFamily};
use crate::tensor::{add_bias_rows, col_sums_acc, matmul_a_bt_acc, matmul_at_b_acc, Tensor};

pub const GATES: usize = 4; // input, forget, output, candidate

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Bidirectional,
}

/// One LSTM layer: per-gate input weights `w [in x W]`, recurrent weights
/// `u [W x W]` and biases `b [W]`, gate order (i, f, o, g).
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub(crate) w: [Tensor; 4],
    pub(crate) u: [Tensor; 4],
    pub(crate) b: [Tensor; 4],
    width: usize,
    input_dim: usize,
}

impl LstmLayer {
    fn new<R: Rng>(input_dim: usize, width: usize, rng: &mut R) -> Self {
        let w = std::array::from_fn(|_| glorot(&[input_dim, width], input_dim, width, rng));
        let u = std::array::from_fn(|_| glorot(&[width, width], width, width, rng));
        let mut b: [Tensor; 4] = std::array::from_fn(|_| Tensor::zeros(&[width]));
        // forget-gate bias starts at 1 so early training does not flush memory
        b[1].fill(1.0);
        LstmLayer {
            w,
            u,
            b,
            width,
            input_dim,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs about one timestep of one layer.
struct StepCache {
    h_prev: Tensor,
    c_prev: Tensor,
    i: Tensor,
    f: Tensor,
    o: Tensor,
    g: Tensor,
    tanh_c: Tensor,
}

/// One vanilla LSTM cell update over a batch of streams.
///
/// `x [b x in]`, `h_prev`/`c_prev` `[b x W]`. Returns `(h, c)`.
pub fn lstm_cell_step(
    layer: &LstmLayer,
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (h, c, _) = cell_step_cached(layer, x, h_prev, c_prev)?;
    Ok((h, c))
}

fn cell_step_cached(
    layer: &LstmLayer,
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
) -> Result<(Tensor, Tensor, StepCache)> {
    let b = x.shape()[0];
    if x.rank() != 2 || x.shape()[1] != layer.input_dim {
        return Err(HarError::RejectedInput(format!(
            "cell input shape {:?} != [b x {}]",
            x.shape(),
            layer.input_dim
        )));
    }
    if h_prev.shape() != [b, layer.width] || c_prev.shape() != [b, layer.width] {
        return Err(HarError::RejectedInput(format!(
            "state shape {:?}/{:?} != [{b} x {}]",
            h_prev.shape(),
            c_prev.shape(),
            layer.width
        )));
    }

    // pre-activations per gate: x W + h_prev U + b
    let mut pre: [Tensor; 4] = std::array::from_fn(|gi| {
        let mut p = Tensor::zeros(&[b, layer.width]);
        crate::tensor::matmul_into(x, &layer.w[gi], &mut p);
        matmul_a_bt_acc_t(h_prev, &layer.u[gi], &mut p);
        add_bias_rows(&mut p, &layer.b[gi]);
        p
    });

    for v in pre[0].data_mut() {
        *v = sigmoid(*v);
    }
    for v in pre[1].data_mut() {
        *v = sigmoid(*v);
    }
    for v in pre[2].data_mut() {
        *v = sigmoid(*v);
    }
    for v in pre[3].data_mut() {
        *v = v.tanh();
    }
    let [i, f, o, g] = pre;

    let mut c = Tensor::zeros(&[b, layer.width]);
    for (((cv, &fv), (&cp, &iv)), &gv) in c
        .data_mut()
        .iter_mut()
        .zip(f.data())
        .zip(c_prev.data().iter().zip(i.data()))
        .zip(g.data())
    {
        *cv = fv * cp + iv * gv;
    }
    let mut tanh_c = c.clone();
    for v in tanh_c.data_mut() {
        *v = v.tanh();
    }
    let mut h = Tensor::zeros(&[b, layer.width]);
    for ((hv, &ov), &tc) in h.data_mut().iter_mut().zip(o.data()).zip(tanh_c.data()) {
        *hv = ov * tc;
    }

    let cache = StepCache {
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        o,
        g,
        tanh_c,
    };
    Ok((h, c, cache))
}

// `out += a * b` where forward uses w as [in x W]; recurrent term is plain
// matmul with u [W x W]. Kept as a tiny wrapper for symmetry with the
// backward kernels.
fn matmul_a_bt_acc_t(h: &Tensor, u: &Tensor, out: &mut Tensor) {
    // h [b x W] * u [W x W]
    let tmp = crate::tensor::matmul(h, u).expect("recurrent shapes");
    out.add_assign(&tmp);
}

/// Per-layer hidden and cell states for a group of parallel streams.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Vec<Tensor>,
    pub c: Vec<Tensor>,
}

impl LstmState {
    pub fn zeros(layers: usize, streams: usize, width: usize) -> Self {
        LstmState {
            h: (0..layers).map(|_| Tensor::zeros(&[streams, width])).collect(),
            c: (0..layers).map(|_| Tensor::zeros(&[streams, width])).collect(),
        }
    }

    /// Zero one stream's state in every layer.
    pub fn reset_stream(&mut self, stream: usize) {
        for t in self.h.iter_mut().chain(self.c.iter_mut()) {
            t.row_mut(stream).iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn streams(&self) -> usize {
        self.h.first().map_or(0, |t| t.shape()[0])
    }
}

/// Stacked LSTM with a shared per-timestep softmax head.
#[derive(Debug, Clone)]
pub struct LstmModel {
    fwd: Vec<LstmLayer>,
    bwd: Vec<LstmLayer>,
    head: Dense,
    direction: Direction,
    input_dim: usize,
    width: usize,
    n_classes: usize,
}

impl LstmModel {
    pub fn new<R: Rng>(
        input_dim: usize,
        n_classes: usize,
        layers: usize,
        width: usize,
        direction: Direction,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(HarError::RejectedConfig("at least one LSTM layer".into()));
        }
        let mut fwd = Vec::with_capacity(layers);
        let mut dim = input_dim;
        for _ in 0..layers {
            fwd.push(LstmLayer::new(dim, width, rng));
            dim = width;
        }
        let bwd = if direction == Direction::Bidirectional {
            let mut track = Vec::with_capacity(layers);
            let mut dim = input_dim;
            for _ in 0..layers {
                track.push(LstmLayer::new(dim, width, rng));
                dim = width;
            }
            track
        } else {
            Vec::new()
        };
        let head_in = match direction {
            Direction::Forward => width,
            Direction::Bidirectional => 2 * width,
        };
        let head = Dense::new(head_in, n_classes, rng);
        Ok(LstmModel {
            fwd,
            bwd,
            head,
            direction,
            input_dim,
            width,
            n_classes,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn layers(&self) -> usize {
        self.fwd.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Run one track (a layer stack) over a step sequence, updating `state`
    /// in place. Returns the top layer's h per step and, if requested, the
    /// full cache.
    fn run_track(
        layers: &[LstmLayer],
        inputs: &[Tensor],
        state: &mut LstmState,
        boundary: Option<&[Vec<bool>]>,
        want_cache: bool,
    ) -> Result<(Vec<Tensor>, TrackCache)> {
        let t_len = inputs.len();
        let mut cache = TrackCache {
            steps: Vec::new(),
            layer_outputs: Vec::new(),
        };
        let mut cur_seq: Vec<Tensor> = Vec::new();
        for (l, layer) in layers.iter().enumerate() {
            let mut steps = Vec::with_capacity(if want_cache { t_len } else { 0 });
            let mut outs = Vec::with_capacity(t_len);
            for t in 0..t_len {
                if let Some(mask) = boundary {
                    for (stream, &reset) in mask[t].iter().enumerate() {
                        if reset {
                            state.h[l].row_mut(stream).iter_mut().for_each(|v| *v = 0.0);
                            state.c[l].row_mut(stream).iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                }
                let x = if l == 0 { &inputs[t] } else { &cur_seq[t] };
                let (h, c, step) = cell_step_cached(layer, x, &state.h[l], &state.c[l])?;
                state.h[l] = h.clone();
                state.c[l] = c;
                if want_cache {
                    steps.push(step);
                }
                outs.push(h);
            }
            if want_cache {
                cache.steps.push(steps);
                if l > 0 {
                    cache.layer_outputs.push(std::mem::take(&mut cur_seq));
                }
            }
            cur_seq = outs;
        }
        Ok((cur_seq, cache))
    }

    /// BPTT through one track. `d_top[t]` is the gradient w.r.t. the top
    /// layer's h at step t. Parameter gradients are accumulated into
    /// `grads` (layer-major, 12 tensors per layer). Returns gradients
    /// w.r.t. the track inputs when `need_dx`.
    fn backward_track(
        layers: &[LstmLayer],
        inputs: &[Tensor],
        cache: &TrackCache,
        mut d_top: Vec<Tensor>,
        boundary: Option<&[Vec<bool>]>,
        grads: &mut [Tensor],
        need_dx: bool,
    ) -> Result<Vec<Tensor>> {
        let t_len = inputs.len();
        let streams = inputs[0].shape()[0];
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let width = layer.width;
            let layer_inputs: &[Tensor] = if l == 0 {
                inputs
            } else {
                &cache.layer_outputs[l - 1]
            };
            let lower_needed = l > 0 || need_dx;
            let mut d_below: Vec<Tensor> = if lower_needed {
                (0..t_len)
                    .map(|_| Tensor::zeros(&[streams, layer_inputs[0].shape()[1]]))
                    .collect()
            } else {
                Vec::new()
            };
            let g_off = 12 * l;
            let mut dh_carry = Tensor::zeros(&[streams, width]);
            let mut dc_carry = Tensor::zeros(&[streams, width]);
            for t in (0..t_len).rev() {
                let step = &cache.steps[l][t];
                let mut dh = std::mem::replace(&mut d_top[t], Tensor::zeros(&[1, 1]));
                dh.add_assign(&dh_carry);

                let n = dh.len();
                let mut dpre_i = Tensor::zeros(&[streams, width]);
                let mut dpre_f = Tensor::zeros(&[streams, width]);
                let mut dpre_o = Tensor::zeros(&[streams, width]);
                let mut dpre_g = Tensor::zeros(&[streams, width]);
                let mut dc_prev = Tensor::zeros(&[streams, width]);
                {
                    let dh_d = dh.data();
                    let i_d = step.i.data();
                    let f_d = step.f.data();
                    let o_d = step.o.data();
                    let g_d = step.g.data();
                    let tc_d = step.tanh_c.data();
                    let cp_d = step.c_prev.data();
                    let dcc_d = dc_carry.data();
                    let dpi = dpre_i.data_mut();
                    let dpf = dpre_f.data_mut();
                    let dpo = dpre_o.data_mut();
                    let dpg = dpre_g.data_mut();
                    let dcp = dc_prev.data_mut();
                    for k in 0..n {
                        let d_o = dh_d[k] * tc_d[k];
                        dpo[k] = d_o * o_d[k] * (1.0 - o_d[k]);
                        let dc = dh_d[k] * o_d[k] * (1.0 - tc_d[k] * tc_d[k]) + dcc_d[k];
                        let d_f = dc * cp_d[k];
                        dpf[k] = d_f * f_d[k] * (1.0 - f_d[k]);
                        let d_i = dc * g_d[k];
                        dpi[k] = d_i * i_d[k] * (1.0 - i_d[k]);
                        let d_g = dc * i_d[k];
                        dpg[k] = d_g * (1.0 - g_d[k] * g_d[k]);
                        dcp[k] = dc * f_d[k];
                    }
                }

                let x_t = &layer_inputs[t];
                let dpres = [&dpre_i, &dpre_f, &dpre_o, &dpre_g];
                for (gi, dpre) in dpres.iter().enumerate() {
                    matmul_at_b_acc(x_t, dpre, &mut grads[g_off + gi]);
                    matmul_at_b_acc(&step.h_prev, dpre, &mut grads[g_off + 4 + gi]);
                    col_sums_acc(dpre, &mut grads[g_off + 8 + gi]);
                }
                if lower_needed {
                    for (gi, dpre) in dpres.iter().enumerate() {
                        matmul_a_bt_acc(dpre, &layer.w[gi], &mut d_below[t]);
                    }
                }
                dh_carry.fill(0.0);
                for (gi, dpre) in dpres.iter().enumerate() {
                    matmul_a_bt_acc(dpre, &layer.u[gi], &mut dh_carry);
                }
                dc_carry = dc_prev;
                if let Some(mask) = boundary {
                    for (stream, &reset) in mask[t].iter().enumerate() {
                        if reset {
                            dh_carry.row_mut(stream).iter_mut().for_each(|v| *v = 0.0);
                            dc_carry.row_mut(stream).iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                }
            }
            d_top = d_below;
        }
        Ok(d_top)
    }

    /// Forward-direction pass over a batch of parallel streams.
    ///
    /// `inputs[t]` is `[b x in]`; `state` carries (h, c) across calls and is
    /// updated in place; `boundary[t][stream]` zeroes that stream's state
    /// before consuming step `t` (recording starts).
    pub fn forward_batch(
        &self,
        inputs: &[Tensor],
        state: &mut LstmState,
        boundary: Option<&[Vec<bool>]>,
    ) -> Result<Vec<Tensor>> {
        self.check_forward(inputs, state)?;
        let (top, _) = Self::run_track(&self.fwd, inputs, state, boundary, false)?;
        Ok(top
            .into_iter()
            .map(|h| {
                let mut logits = self.head.forward(&h);
                softmax_rows(&mut logits);
                logits
            })
            .collect())
    }

    /// Single-stream convenience: `inputs [T x in]` to per-step class
    /// probabilities `[T x classes]` plus the final states for carry-over.
    pub fn forward_sequence(
        &self,
        inputs: &Tensor,
        state: Option<LstmState>,
    ) -> Result<(Tensor, LstmState)> {
        if inputs.rank() != 2 || inputs.shape()[1] != self.input_dim {
            return Err(HarError::ShapeMismatch(format!(
                "sequence shape {:?} != [T x {}]",
                inputs.shape(),
                self.input_dim
            )));
        }
        let t_len = inputs.shape()[0];
        let steps: Vec<Tensor> = (0..t_len)
            .map(|t| Tensor::from_vec(&[1, self.input_dim], inputs.row(t).to_vec()).unwrap())
            .collect();
        let mut state = state.unwrap_or_else(|| LstmState::zeros(self.fwd.len(), 1, self.width));
        let probs = self.forward_batch(&steps, &mut state, None)?;
        let mut out = Tensor::zeros(&[t_len, self.n_classes]);
        for (t, p) in probs.iter().enumerate() {
            out.row_mut(t).copy_from_slice(p.row(0));
        }
        Ok((out, state))
    }

    /// Bidirectional pass over one whole segment; both tracks start from
    /// zero states.
    pub fn bilstm_forward_sequence(&self, inputs: &Tensor) -> Result<Tensor> {
        if self.direction != Direction::Bidirectional {
            return Err(HarError::RejectedInput(
                "bilstm_forward_sequence needs a bidirectional model".into(),
            ));
        }
        let t_len = inputs.shape()[0];
        let steps: Vec<Tensor> = (0..t_len)
            .map(|t| Tensor::from_vec(&[1, self.input_dim], inputs.row(t).to_vec()).unwrap())
            .collect();
        let probs = self.bilstm_forward_batch(&steps)?;
        let mut out = Tensor::zeros(&[t_len, self.n_classes]);
        for (t, p) in probs.iter().enumerate() {
            out.row_mut(t).copy_from_slice(p.row(0));
        }
        Ok(out)
    }

    /// Bidirectional pass over a batch of segments (`inputs[t]` is `[b x in]`).
    pub fn bilstm_forward_batch(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        if self.direction != Direction::Bidirectional {
            return Err(HarError::RejectedInput("model is not bidirectional".into()));
        }
        let streams = inputs[0].shape()[0];
        let mut fstate = LstmState::zeros(self.fwd.len(), streams, self.width);
        let mut bstate = LstmState::zeros(self.bwd.len(), streams, self.width);
        let (f_top, _) = Self::run_track(&self.fwd, inputs, &mut fstate, None, false)?;
        let rev: Vec<Tensor> = inputs.iter().rev().cloned().collect();
        let (b_top_rev, _) = Self::run_track(&self.bwd, &rev, &mut bstate, None, false)?;
        Ok(self.concat_and_head(&f_top, &b_top_rev))
    }

    fn concat_and_head(&self, f_top: &[Tensor], b_top_rev: &[Tensor]) -> Vec<Tensor> {
        let t_len = f_top.len();
        let streams = f_top[0].shape()[0];
        (0..t_len)
            .map(|t| {
                let z = concat_cols(&f_top[t], &b_top_rev[t_len - 1 - t]);
                let mut logits = self.head.forward(&z);
                softmax_rows(&mut logits);
                let _ = streams;
                logits
            })
            .collect()
    }

    /// Train-mode forward + BPTT for the forward direction.
    ///
    /// Loss is the mean per-sample NLL over all `b * T` predictions. `state`
    /// is carried and updated; gradients do not flow into carried state.
    pub fn loss_and_grads(
        &self,
        inputs: &[Tensor],
        targets: &[Vec<usize>],
        state: &mut LstmState,
        boundary: Option<&[Vec<bool>]>,
    ) -> Result<(f64, Vec<Tensor>)> {
        if self.direction != Direction::Forward {
            return Err(HarError::RejectedInput(
                "carried-state training applies to forward models".into(),
            ));
        }
        self.check_forward(inputs, state)?;
        let (top, cache) = Self::run_track(&self.fwd, inputs, state, boundary, true)?;
        let mut grads = self.zero_grads();
        let n_track = 12 * self.fwd.len();
        let (track_grads, head_grads) = grads.split_at_mut(n_track);
        let (loss, d_top) =
            self.head_loss_and_dtop(&top, targets, head_grads, inputs[0].shape()[0])?;
        Self::backward_track(&self.fwd, inputs, &cache, d_top, boundary, track_grads, false)?;
        Ok((loss, grads))
    }

    /// Train-mode forward + BPTT for bidirectional segments (zero initial
    /// states, no carry-over).
    pub fn bilstm_loss_and_grads(
        &self,
        inputs: &[Tensor],
        targets: &[Vec<usize>],
    ) -> Result<(f64, Vec<Tensor>)> {
        if self.direction != Direction::Bidirectional {
            return Err(HarError::RejectedInput("model is not bidirectional".into()));
        }
        let t_len = inputs.len();
        let streams = inputs[0].shape()[0];
        let mut fstate = LstmState::zeros(self.fwd.len(), streams, self.width);
        let mut bstate = LstmState::zeros(self.bwd.len(), streams, self.width);
        let (f_top, f_cache) = Self::run_track(&self.fwd, inputs, &mut fstate, None, true)?;
        let rev: Vec<Tensor> = inputs.iter().rev().cloned().collect();
        let (b_top_rev, b_cache) = Self::run_track(&self.bwd, &rev, &mut bstate, None, true)?;

        let mut grads = self.zero_grads();
        let n_f = 12 * self.fwd.len();
        let n_b = 12 * self.bwd.len();
        let total = streams * t_len;
        let inv = 1.0 / total as f64;
        let mut loss = 0.0;
        let mut d_f_top: Vec<Tensor> = Vec::with_capacity(t_len);
        let mut d_b_top_rev: Vec<Tensor> = (0..t_len).map(|_| Tensor::zeros(&[1, 1])).collect();
        {
            let (head_w_grad, rest) = {
                let (a, b) = grads.split_at_mut(n_f + n_b + 1);
                (&mut a[n_f + n_b], b)
            };
            let head_b_grad = &mut rest[0];
            for t in 0..t_len {
                let z = concat_cols(&f_top[t], &b_top_rev[t_len - 1 - t]);
                let mut probs = self.head.forward(&z);
                softmax_rows(&mut probs);
                let mut dlogits = probs.clone();
                for s in 0..streams {
                    let label = targets[t][s];
                    if label >= self.n_classes {
                        return Err(HarError::RejectedInput(format!(
                            "label {label} out of range"
                        )));
                    }
                    loss -= probs.at2(s, label).max(f64::MIN_POSITIVE).ln();
                    let row = dlogits.row_mut(s);
                    row[label] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= inv;
                    }
                }
                let dz = self.head.backward(&z, &dlogits, head_w_grad, head_b_grad);
                let (dzf, dzb) = split_cols(&dz, self.width);
                d_f_top.push(dzf);
                d_b_top_rev[t_len - 1 - t] = dzb;
            }
        }
        loss *= inv;
        {
            let (f_grads, rest) = grads.split_at_mut(n_f);
            let (b_grads, _) = rest.split_at_mut(n_b);
            Self::backward_track(&self.fwd, inputs, &f_cache, d_f_top, None, f_grads, false)?;
            Self::backward_track(&self.bwd, &rev, &b_cache, d_b_top_rev, None, b_grads, false)?;
        }
        Ok((loss, grads))
    }

    /// Head loss over a forward track's top outputs; returns per-step
    /// gradients w.r.t. the top h.
    fn head_loss_and_dtop(
        &self,
        top: &[Tensor],
        targets: &[Vec<usize>],
        head_grads: &mut [Tensor],
        streams: usize,
    ) -> Result<(f64, Vec<Tensor>)> {
        let t_len = top.len();
        if targets.len() != t_len {
            return Err(HarError::RejectedInput("targets/steps mismatch".into()));
        }
        let total = streams * t_len;
        let inv = 1.0 / total as f64;
        let mut loss = 0.0;
        let mut d_top = Vec::with_capacity(t_len);
        let (head_w, head_b) = {
            let (a, b) = head_grads.split_at_mut(1);
            (&mut a[0], &mut b[0])
        };
        for t in 0..t_len {
            let mut probs = self.head.forward(&top[t]);
            softmax_rows(&mut probs);
            let mut dlogits = probs.clone();
            for s in 0..streams {
                let label = targets[t][s];
                if label >= self.n_classes {
                    return Err(HarError::RejectedInput(format!(
                        "label {label} out of range"
                    )));
                }
                loss -= probs.at2(s, label).max(f64::MIN_POSITIVE).ln();
                let row = dlogits.row_mut(s);
                row[label] -= 1.0;
                for v in row.iter_mut() {
                    *v *= inv;
                }
            }
            d_top.push(self.head.backward(&top[t], &dlogits, head_w, head_b));
        }
        Ok((loss * inv, d_top))
    }

    /// Deterministic mean NLL for finite-difference oracles (forward
    /// direction, zero initial state).
    pub fn mean_nll(&self, inputs: &[Tensor], targets: &[Vec<usize>]) -> Result<f64> {
        let streams = inputs[0].shape()[0];
        match self.direction {
            Direction::Forward => {
                let mut state = LstmState::zeros(self.fwd.len(), streams, self.width);
                let probs = self.forward_batch(inputs, &mut state, None)?;
                Ok(mean_nll_of(&probs, targets))
            }
            Direction::Bidirectional => {
                let probs = self.bilstm_forward_batch(inputs)?;
                Ok(mean_nll_of(&probs, targets))
            }
        }
    }

    pub fn zero_state(&self, streams: usize) -> LstmState {
        LstmState::zeros(self.fwd.len(), streams, self.width)
    }

    fn check_forward(&self, inputs: &[Tensor], state: &LstmState) -> Result<()> {
        if inputs.is_empty() {
            return Err(HarError::RejectedInput("empty input sequence".into()));
        }
        if inputs[0].shape()[1] != self.input_dim {
            return Err(HarError::ShapeMismatch(format!(
                "step shape {:?} != [b x {}]",
                inputs[0].shape(),
                self.input_dim
            )));
        }
        if state.h.len() != self.fwd.len() || state.streams() != inputs[0].shape()[0] {
            return Err(HarError::RejectedInput("state does not match model/batch".into()));
        }
        Ok(())
    }

    fn zero_grads(&self) -> Vec<Tensor> {
        let mut grads = Vec::new();
        for layer in self.fwd.iter().chain(&self.bwd) {
            for gi in 0..GATES {
                grads.push(Tensor::zeros(layer.w[gi].shape()));
            }
            for gi in 0..GATES {
                grads.push(Tensor::zeros(layer.u[gi].shape()));
            }
            for gi in 0..GATES {
                grads.push(Tensor::zeros(layer.b[gi].shape()));
            }
        }
        grads.push(Tensor::zeros(self.head.w.shape()));
        grads.push(Tensor::zeros(self.head.b.shape()));
        grads
    }
}

struct TrackCache {
    /// steps[layer][t]
    steps: Vec<Vec<StepCache>>,
    /// h sequences of layers 0..L-1 (inputs to layers 1..L)
    layer_outputs: Vec<Vec<Tensor>>,
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let rows = a.shape()[0];
    let (ca, cb) = (a.shape()[1], b.shape()[1]);
    let mut out = Tensor::zeros(&[rows, ca + cb]);
    for r in 0..rows {
        out.row_mut(r)[..ca].copy_from_slice(a.row(r));
        out.row_mut(r)[ca..].copy_from_slice(b.row(r));
    }
    out
}

fn split_cols(z: &Tensor, at: usize) -> (Tensor, Tensor) {
    let rows = z.shape()[0];
    let cols = z.shape()[1];
    let mut a = Tensor::zeros(&[rows, at]);
    let mut b = Tensor::zeros(&[rows, cols - at]);
    for r in 0..rows {
        a.row_mut(r).copy_from_slice(&z.row(r)[..at]);
        b.row_mut(r).copy_from_slice(&z.row(r)[at..]);
    }
    (a, b)
}

fn mean_nll_of(probs: &[Tensor], targets: &[Vec<usize>]) -> f64 {
    let mut loss = 0.0;
    let mut count = 0usize;
    for (p, row) in probs.iter().zip(targets) {
        for (s, &label) in row.iter().enumerate() {
            loss -= p.at2(s, label).max(f64::MIN_POSITIVE).ln();
            count += 1;
        }
    }
    loss / count as f64
}

impl Model for LstmModel {
    fn family(&self) -> ModelFamily {
        match self.direction {
            Direction::Forward => ModelFamily::LstmS, // callers tag LSTM-F themselves
            Direction::Bidirectional => ModelFamily::BLstmS,
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = Vec::new();
        for layer in self.fwd.iter().chain(&self.bwd) {
            p.extend(layer.w.iter());
            p.extend(layer.u.iter());
            p.extend(layer.b.iter());
        }
        p.push(&self.head.w);
        p.push(&self.head.b);
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = Vec::new();
        for layer in self.fwd.iter_mut().chain(self.bwd.iter_mut()) {
            let (w, u, b) = (&mut layer.w, &mut layer.u, &mut layer.b);
            p.extend(w.iter_mut());
            p.extend(u.iter_mut());
            p.extend(b.iter_mut());
        }
        p.push(&mut self.head.w);
        p.push(&mut self.head.b);
        p
    }

    fn parameter_names(&self) -> Vec<String> {
        let gate = ["i", "f", "o", "g"];
        let mut names = Vec::new();
        let tracks: [(&str, &Vec<LstmLayer>); 2] = [("fwd", &self.fwd), ("bwd", &self.bwd)];
        for (tag, track) in tracks {
            for l in 0..track.len() {
                for g in gate {
                    names.push(format!("{tag}{l}.w_{g}"));
                }
                for g in gate {
                    names.push(format!("{tag}{l}.u_{g}"));
                }
                for g in gate {
                    names.push(format!("{tag}{l}.b_{g}"));
                }
            }
        }
        names.push("head.w".into());
        names.push("head.b".into());
        names
    }

    fn apply_maxin_norm(&mut self, d_in: f64) -> Result<()> {
        check_d_in(d_in)?;
        for layer in self.fwd.iter_mut().chain(self.bwd.iter_mut()) {
            for w in layer.w.iter_mut().chain(layer.u.iter_mut()) {
                maxin_columns(w, d_in);
            }
        }
        maxin_columns(&mut self.head.w, d_in);
        Ok(())
    }

    fn incoming_norms(&self) -> Vec<f64> {
        let mut norms = Vec::new();
        for layer in self.fwd.iter().chain(&self.bwd) {
            for w in layer.w.iter().chain(layer.u.iter()) {
                column_norms(w, &mut norms);
            }
        }
        column_norms(&self.head.w, &mut norms);
        norms
    }
}
