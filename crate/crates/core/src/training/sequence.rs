//! Mini-batch construction for recurrent models.
//!
//! A [`SequenceBatcher`] maintains `b` positions in the training stream,
//! extracts the `L` samples after each position, advances by `L` with
//! wrap-around, and draws a fresh carry-over decision per stream each batch:
//! the model's state is retained with probability `p_carry` and zeroed
//! otherwise. Sample order within a stream is the recording order; no
//! stratification is attempted.

use rand::Rng;

use crate::data::{FrameDataset, SequenceDataset};
use crate::error::{HarError, Result};
use crate::tensor::Tensor;

/// A labelled, ordered stream of fixed-width inputs for recurrent training.
pub trait SampleStream {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn label(&self, idx: usize) -> usize;
    /// True when `idx` starts a new recording (state must not carry in).
    fn is_boundary(&self, idx: usize) -> bool;
    fn copy_into(&self, idx: usize, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleStream for SequenceDataset {
    fn len(&self) -> usize {
        SequenceDataset::len(self)
    }

    fn dim(&self) -> usize {
        self.channels()
    }

    fn label(&self, idx: usize) -> usize {
        SequenceDataset::label(self, idx)
    }

    fn is_boundary(&self, idx: usize) -> bool {
        self.is_recording_start(idx)
    }

    fn copy_into(&self, idx: usize, out: &mut [f64]) {
        out.copy_from_slice(self.sample(idx));
    }
}

/// Frames in temporal order, flattened, as a stream (the LSTM-F input).
pub struct FrameSeqStream<'a> {
    frames: &'a FrameDataset,
}

impl<'a> FrameSeqStream<'a> {
    pub fn new(frames: &'a FrameDataset) -> Self {
        FrameSeqStream { frames }
    }
}

impl SampleStream for FrameSeqStream<'_> {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn dim(&self) -> usize {
        self.frames.flat_len()
    }

    fn label(&self, idx: usize) -> usize {
        self.frames.label(idx)
    }

    fn is_boundary(&self, idx: usize) -> bool {
        idx == 0 || self.frames.recording_of(idx) != self.frames.recording_of(idx - 1)
    }

    fn copy_into(&self, idx: usize, out: &mut [f64]) {
        self.frames.copy_frame_into(idx, out);
    }
}

/// One training batch for carried-state recurrent models.
pub struct SequenceBatch {
    /// Step-major inputs: `inputs[t]` is `[b x dim]`.
    pub inputs: Vec<Tensor>,
    /// `targets[t][stream]`.
    pub targets: Vec<Vec<usize>>,
    /// Carry-over decision per stream: true means zero the state before
    /// this batch.
    pub reset: Vec<bool>,
    /// `boundary[t][stream]`: sample starts a new recording; state is zeroed
    /// before consuming it.
    pub boundary: Vec<Vec<bool>>,
    /// Window start position per stream (bookkeeping).
    pub starts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SequenceBatcher {
    streams: usize,
    unroll: usize,
    p_carry: f64,
    positions: Vec<usize>,
}

impl SequenceBatcher {
    /// Positions are initialised uniformly at random over the stream.
    pub fn new<R: Rng>(
        streams: usize,
        unroll: usize,
        p_carry: f64,
        stream_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if streams == 0 || unroll == 0 {
            return Err(HarError::RejectedConfig(
                "streams and unroll length must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&p_carry) {
            return Err(HarError::RejectedConfig(format!(
                "carry-over probability must be in [0, 1], got {p_carry}"
            )));
        }
        if unroll >= stream_len {
            return Err(HarError::RejectedConfig(format!(
                "unroll length {unroll} must be below the stream length {stream_len}"
            )));
        }
        let positions = (0..streams).map(|_| rng.gen_range(0..stream_len)).collect();
        Ok(SequenceBatcher {
            streams,
            unroll,
            p_carry,
            positions,
        })
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn unroll(&self) -> usize {
        self.unroll
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Batches per epoch: enough for the streams to jointly cover the
    /// training stream once.
    pub fn batches_per_epoch(&self, stream_len: usize) -> usize {
        stream_len.div_ceil(self.streams * self.unroll).max(1)
    }

    /// Extract the next batch and advance every position by `L`.
    pub fn next_batch<S: SampleStream, R: Rng>(&mut self, data: &S, rng: &mut R) -> SequenceBatch {
        let len = data.len();
        let dim = data.dim();
        let (b, l) = (self.streams, self.unroll);

        // carry-over decisions first, one draw per stream, fixed order
        let reset: Vec<bool> = (0..b).map(|_| rng.gen::<f64>() >= self.p_carry).collect();

        let mut inputs = Vec::with_capacity(l);
        let mut targets = Vec::with_capacity(l);
        let mut boundary = Vec::with_capacity(l);
        for t in 0..l {
            let mut x = Tensor::zeros(&[b, dim]);
            let mut labels = Vec::with_capacity(b);
            let mut bounds = Vec::with_capacity(b);
            for s in 0..b {
                let idx = (self.positions[s] + t) % len;
                data.copy_into(idx, x.row_mut(s));
                labels.push(data.label(idx));
                bounds.push(data.is_boundary(idx));
            }
            inputs.push(x);
            targets.push(labels);
            boundary.push(bounds);
        }
        let starts = self.positions.clone();
        for p in &mut self.positions {
            *p = (*p + l) % len;
        }
        SequenceBatch {
            inputs,
            targets,
            reset,
            boundary,
            starts,
        }
    }
}

/// Disjoint fixed-length segments within recordings, shuffled per epoch:
/// the training granularity of bidirectional models, which need the whole
/// segment visible and start from zero states.
#[derive(Debug)]
pub struct SegmentBatcher {
    unroll: usize,
    segment_starts: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
}

impl SegmentBatcher {
    pub fn new(seq: &SequenceDataset, unroll: usize) -> Result<Self> {
        if unroll == 0 {
            return Err(HarError::RejectedConfig("unroll length must be positive".into()));
        }
        let mut segment_starts = Vec::new();
        for rec in seq.recordings() {
            let mut k = 0;
            while (k + 1) * unroll <= rec.len {
                segment_starts.push(rec.start + k * unroll);
                k += 1;
            }
        }
        if segment_starts.is_empty() {
            return Err(HarError::RejectedConfig(format!(
                "no recording holds a full segment of {unroll} samples"
            )));
        }
        Ok(SegmentBatcher {
            unroll,
            order: (0..segment_starts.len()).collect(),
            segment_starts,
            cursor: 0,
        })
    }

    pub fn segments(&self) -> usize {
        self.segment_starts.len()
    }

    pub fn batches_per_epoch(&self, batch_segments: usize) -> usize {
        self.segments().div_ceil(batch_segments)
    }

    /// Next `batch_segments` segments as step-major inputs/targets.
    pub fn next_batch<R: Rng>(
        &mut self,
        seq: &SequenceDataset,
        batch_segments: usize,
        rng: &mut R,
    ) -> (Vec<Tensor>, Vec<Vec<usize>>) {
        use rand::seq::SliceRandom;
        let b = batch_segments.min(self.segments());
        let mut picked = Vec::with_capacity(b);
        for _ in 0..b {
            if self.cursor == 0 {
                self.order.shuffle(rng);
            }
            picked.push(self.segment_starts[self.order[self.cursor]]);
            self.cursor = (self.cursor + 1) % self.order.len();
        }
        let d = seq.channels();
        let mut inputs = Vec::with_capacity(self.unroll);
        let mut targets = Vec::with_capacity(self.unroll);
        for t in 0..self.unroll {
            let mut x = Tensor::zeros(&[b, d]);
            let mut labels = Vec::with_capacity(b);
            for (s, &start) in picked.iter().enumerate() {
                x.row_mut(s).copy_from_slice(seq.sample(start + t));
                labels.push(seq.label(start + t));
            }
            inputs.push(x);
            targets.push(labels);
        }
        (inputs, targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RawRecording;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(len: usize) -> SequenceDataset {
        let rec = RawRecording {
            subject: 0,
            run: 0,
            rate_hz: 1.0,
            channels: 1,
            samples: (0..len).map(|v| v as f64).collect(),
            labels: (0..len).map(|v| v % 3).collect(),
            source: "t".into(),
        };
        SequenceDataset::from_recordings(&[rec], 3).unwrap()
    }

    #[test]
    fn rejects_unroll_at_or_beyond_stream_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(SequenceBatcher::new(4, 100, 0.5, 100, &mut rng).is_err());
        assert!(SequenceBatcher::new(4, 10, 0.5, 100, &mut rng).is_ok());
    }

    #[test]
    fn positions_advance_by_exactly_unroll_with_wraparound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = seq(50);
        let mut batcher = SequenceBatcher::new(3, 8, 1.0, 50, &mut rng).unwrap();
        let before = batcher.positions().to_vec();
        let batch = batcher.next_batch(&data, &mut rng);
        assert_eq!(batch.starts, before);
        for (p, b) in batcher.positions().iter().zip(&before) {
            assert_eq!(*p, (b + 8) % 50);
        }
    }

    #[test]
    fn epoch_coverage_is_a_contiguous_wrapped_slice() {
        // bookkeeping oracle: per stream, concatenated indices over an epoch
        // form [start, start + batches*L) mod len
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = seq(97);
        let mut batcher = SequenceBatcher::new(4, 7, 0.5, 97, &mut rng).unwrap();
        let epoch_batches = batcher.batches_per_epoch(97);
        let starts0 = batcher.positions().to_vec();
        let mut seen: Vec<Vec<usize>> = vec![Vec::new(); 4];
        for _ in 0..epoch_batches {
            let batch = batcher.next_batch(&data, &mut rng);
            for t in 0..7 {
                for s in 0..4 {
                    // recover the sample index from the stored value
                    let v = batch.inputs[t].at2(s, 0) as usize;
                    seen[s].push(v);
                }
            }
        }
        for s in 0..4 {
            for (k, &idx) in seen[s].iter().enumerate() {
                assert_eq!(idx, (starts0[s] + k) % 97);
            }
        }
    }

    #[test]
    fn carry_over_boundary_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = seq(60);
        let mut always = SequenceBatcher::new(8, 5, 1.0, 60, &mut rng).unwrap();
        let mut never = SequenceBatcher::new(8, 5, 0.0, 60, &mut rng).unwrap();
        for _ in 0..10 {
            assert!(always.next_batch(&data, &mut rng).reset.iter().all(|&r| !r));
            assert!(never.next_batch(&data, &mut rng).reset.iter().all(|&r| r));
        }
    }

    #[test]
    fn retain_frequency_matches_p_carry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = seq(60);
        let p = 0.7;
        let mut batcher = SequenceBatcher::new(16, 5, p, 60, &mut rng).unwrap();
        let n_batches = 1000usize;
        let mut retained = 0usize;
        let mut total = 0usize;
        for _ in 0..n_batches {
            let batch = batcher.next_batch(&data, &mut rng);
            retained += batch.reset.iter().filter(|&&r| !r).count();
            total += batch.reset.len();
        }
        let freq = retained as f64 / total as f64;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        assert!(
            (freq - p).abs() <= 4.0 * sigma,
            "retain frequency {freq} vs {p} (4 sigma = {})",
            4.0 * sigma
        );
    }

    #[test]
    fn boundaries_flag_recording_starts() {
        let recs: Vec<RawRecording> = (0..2)
            .map(|r| RawRecording {
                subject: 0,
                run: r,
                rate_hz: 1.0,
                channels: 1,
                samples: (0..20).map(|v| v as f64).collect(),
                labels: vec![0; 20],
                source: format!("r{r}"),
            })
            .collect();
        let data = SequenceDataset::from_recordings(&recs, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut batcher = SequenceBatcher::new(1, 8, 1.0, 40, &mut rng).unwrap();
        let mut boundary_hits = 0;
        for _ in 0..5 {
            let batch = batcher.next_batch(&data, &mut rng);
            for t in 0..8 {
                if batch.boundary[t][0] {
                    boundary_hits += 1;
                    let idx = (batch.starts[0] + t) % 40;
                    assert!(idx == 0 || idx == 20);
                }
            }
        }
        assert!(boundary_hits > 0);
    }

    #[test]
    fn segment_batcher_respects_recording_bounds() {
        let recs: Vec<RawRecording> = [25usize, 17].iter().enumerate().map(|(r, &len)| RawRecording {
            subject: 0,
            run: r as u32,
            rate_hz: 1.0,
            channels: 1,
            samples: (0..len).map(|v| v as f64).collect(),
            labels: vec![0; len],
            source: format!("r{r}"),
        }).collect();
        let data = SequenceDataset::from_recordings(&recs, 1).unwrap();
        let batcher = SegmentBatcher::new(&data, 8).unwrap();
        // recording 0: floor(25/8)=3 segments; recording 1: floor(17/8)=2
        assert_eq!(batcher.segments(), 5);
        let mut b = SegmentBatcher::new(&data, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (inputs, targets) = b.next_batch(&data, 4, &mut rng);
        assert_eq!(inputs.len(), 8);
        assert_eq!(inputs[0].shape(), &[4, 1]);
        assert_eq!(targets.len(), 8);
    }
}
