//! Dataset ingestion and segmentation.
//!
//! Recordings are kept as contiguous labelled multichannel streams. A
//! [`SequenceDataset`] concatenates the recordings of one split while
//! preserving their boundaries (recurrent state must never carry across
//! them); a [`FrameDataset`] is a sliding-window view over a sequence
//! dataset, with no frame straddling a recording boundary.

pub mod cache;
pub mod daphnet;
pub mod opportunity;
pub mod pamap2;
pub mod synth;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::tensor::Tensor;

pub use synth::{synthesize, SynthSpec};

/// One continuous recording: `time x d` channel matrix plus per-sample labels.
#[derive(Debug, Clone)]
pub struct RawRecording {
    pub subject: u32,
    pub run: u32,
    pub rate_hz: f64,
    pub channels: usize,
    /// Row-major `time x channels`.
    pub samples: Vec<f64>,
    pub labels: Vec<usize>,
    /// Provenance tag (source file or generator).
    pub source: String,
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate_hz <= 0.0 {
            return Err(HarError::RejectedInput("sample rate must be positive".into()));
        }
        if self.samples.len() != self.labels.len() * self.channels {
            return Err(HarError::RejectedInput(format!(
                "recording {}: {} values != {} samples x {} channels",
                self.source,
                self.samples.len(),
                self.labels.len(),
                self.channels
            )));
        }
        Ok(())
    }
}

/// Frame label rule: majority vote (ties toward the window's last sample) or
/// the last sample's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameLabelling {
    Majority,
    Last,
}

/// The extent of one recording inside a concatenated split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordingSpan {
    pub subject: u32,
    pub run: u32,
    pub source: String,
    pub start: usize,
    pub len: usize,
}

/// Ordered concatenation of one split's recordings.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    d: usize,
    rate_hz: f64,
    n_classes: usize,
    samples: Vec<f64>,
    labels: Vec<usize>,
    recordings: Vec<RecordingSpan>,
}

impl SequenceDataset {
    pub fn from_recordings(recs: &[RawRecording], n_classes: usize) -> Result<Self> {
        if recs.is_empty() {
            return Err(HarError::RejectedInput("split has no recordings".into()));
        }
        let d = recs[0].channels;
        let rate = recs[0].rate_hz;
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut recordings = Vec::new();
        for rec in recs {
            rec.validate()?;
            if rec.channels != d {
                return Err(HarError::RejectedInput(format!(
                    "recording {} has {} channels, expected {d}",
                    rec.source, rec.channels
                )));
            }
            if (rec.rate_hz - rate).abs() > 1e-9 {
                return Err(HarError::RejectedInput(format!(
                    "recording {} rate {} != {rate}",
                    rec.source, rec.rate_hz
                )));
            }
            if rec.is_empty() {
                continue;
            }
            if let Some(&bad) = rec.labels.iter().find(|&&l| l >= n_classes) {
                return Err(HarError::RejectedInput(format!(
                    "recording {}: label {bad} out of range for {n_classes} classes",
                    rec.source
                )));
            }
            recordings.push(RecordingSpan {
                subject: rec.subject,
                run: rec.run,
                source: rec.source.clone(),
                start: labels.len(),
                len: rec.len(),
            });
            samples.extend_from_slice(&rec.samples);
            labels.extend_from_slice(&rec.labels);
        }
        if labels.is_empty() {
            return Err(HarError::RejectedInput("split has no samples".into()));
        }
        Ok(SequenceDataset {
            d,
            rate_hz: rate,
            n_classes,
            samples,
            labels,
            recordings,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn recordings(&self) -> &[RecordingSpan] {
        &self.recordings
    }

    #[inline]
    pub fn sample(&self, idx: usize) -> &[f64] {
        &self.samples[idx * self.d..(idx + 1) * self.d]
    }

    #[inline]
    pub fn label(&self, idx: usize) -> usize {
        self.labels[idx]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// True when `idx` is the first sample of a recording.
    pub fn is_recording_start(&self, idx: usize) -> bool {
        self.recordings
            .binary_search_by_key(&idx, |r| r.start)
            .is_ok()
    }

    /// Recording index containing sample `idx`.
    pub fn recording_of(&self, idx: usize) -> usize {
        match self.recordings.binary_search_by_key(&idx, |r| r.start) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Per-channel mean and standard deviation over the whole split.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.d];
        for i in 0..self.len() {
            for (m, &v) in mean.iter_mut().zip(self.sample(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.d];
        for i in 0..self.len() {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(self.sample(i)) {
                let dv = v - m;
                *s += dv * dv;
            }
        }
        let std = var.iter().map(|&s| (s / n).sqrt()).collect();
        (mean, std)
    }

    /// Standardise channels in place with the supplied statistics
    /// (training-split statistics are used for every split).
    pub fn standardize(&mut self, mean: &[f64], std: &[f64]) {
        let d = self.d;
        for (k, v) in self.samples.iter_mut().enumerate() {
            let c = k % d;
            let s = if std[c] > 1e-8 { std[c] } else { 1.0 };
            *v = (*v - mean[c]) / s;
        }
    }
}

/// Sliding-window view over a [`SequenceDataset`]: frame starts plus labels.
/// Frames are materialised on demand; windows never cross recording
/// boundaries.
#[derive(Debug, Clone)]
pub struct FrameDataset {
    seq: Arc<SequenceDataset>,
    window: usize,
    step: usize,
    starts: Vec<usize>,
    labels: Vec<usize>,
    rec_of_frame: Vec<u32>,
}

impl FrameDataset {
    pub fn build(
        seq: Arc<SequenceDataset>,
        window: usize,
        step: usize,
        labelling: FrameLabelling,
    ) -> Result<Self> {
        if step == 0 {
            return Err(HarError::RejectedInput("step must be at least 1".into()));
        }
        if window == 0 {
            return Err(HarError::RejectedInput("window must be at least 1".into()));
        }
        let mut starts = Vec::new();
        let mut labels = Vec::new();
        let mut rec_of_frame = Vec::new();
        for (ri, rec) in seq.recordings().iter().enumerate() {
            if rec.len < window {
                log::warn!(
                    "recording {} shorter than window ({} < {window}): zero frames",
                    rec.source,
                    rec.len
                );
                continue;
            }
            let count = (rec.len - window) / step + 1;
            for k in 0..count {
                let start = rec.start + k * step;
                starts.push(start);
                labels.push(frame_label(&seq, start, window, labelling));
                rec_of_frame.push(ri as u32);
            }
        }
        Ok(FrameDataset {
            seq,
            window,
            step,
            starts,
            labels,
            rec_of_frame,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn channels(&self) -> usize {
        self.seq.channels()
    }

    pub fn n_classes(&self) -> usize {
        self.seq.n_classes()
    }

    pub fn label(&self, frame: usize) -> usize {
        self.labels[frame]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn start(&self, frame: usize) -> usize {
        self.starts[frame]
    }

    /// Recording index a frame belongs to.
    pub fn recording_of(&self, frame: usize) -> u32 {
        self.rec_of_frame[frame]
    }

    pub fn sequence(&self) -> &Arc<SequenceDataset> {
        &self.seq
    }

    /// Flattened frame length `s * d`.
    pub fn flat_len(&self) -> usize {
        self.window * self.seq.channels()
    }

    /// Copy frame `i` (row-major `s x d`) into `out`.
    pub fn copy_frame_into(&self, frame: usize, out: &mut [f64]) {
        let d = self.seq.channels();
        debug_assert_eq!(out.len(), self.window * d);
        let start = self.starts[frame];
        for t in 0..self.window {
            out[t * d..(t + 1) * d].copy_from_slice(self.seq.sample(start + t));
        }
    }

    pub fn frame_tensor(&self, frame: usize) -> Tensor {
        let mut out = vec![0.0; self.flat_len()];
        self.copy_frame_into(frame, &mut out);
        Tensor::from_vec(&[self.window, self.seq.channels()], out).unwrap()
    }
}

fn frame_label(
    seq: &SequenceDataset,
    start: usize,
    window: usize,
    labelling: FrameLabelling,
) -> usize {
    match labelling {
        FrameLabelling::Last => seq.label(start + window - 1),
        FrameLabelling::Majority => {
            let mut counts = vec![0usize; seq.n_classes()];
            for t in start..start + window {
                counts[seq.label(t)] += 1;
            }
            let best = *counts.iter().max().unwrap();
            let last = seq.label(start + window - 1);
            if counts[last] == best {
                last
            } else {
                counts.iter().position(|&c| c == best).unwrap()
            }
        }
    }
}

/// Window a single recording (spec-level convenience over
/// [`FrameDataset::build`]).
pub fn sliding_window(
    rec: &RawRecording,
    window: usize,
    step: usize,
    labelling: FrameLabelling,
) -> Result<FrameDataset> {
    rec.validate()?;
    let n_classes = rec.labels.iter().copied().max().unwrap_or(0) + 1;
    let seq = SequenceDataset::from_recordings(std::slice::from_ref(rec), n_classes)?;
    FrameDataset::build(Arc::new(seq), window, step, labelling)
}

/// Decimate a recording to `target_hz` by averaging contiguous bins of
/// `round(source/target)` samples; bin labels by majority (ties toward the
/// bin's last sample).
pub fn downsample(rec: &RawRecording, target_hz: f64) -> Result<RawRecording> {
    if target_hz <= 0.0 {
        return Err(HarError::RejectedInput("target rate must be positive".into()));
    }
    if target_hz > rec.rate_hz + 1e-9 {
        return Err(HarError::RejectedInput(format!(
            "target rate {target_hz} above source rate {}",
            rec.rate_hz
        )));
    }
    rec.validate()?;
    let bin = (rec.rate_hz / target_hz).round().max(1.0) as usize;
    if bin == 1 {
        return Ok(rec.clone());
    }
    let d = rec.channels;
    let out_len = rec.len() / bin;
    let mut samples = Vec::with_capacity(out_len * d);
    let mut labels = Vec::with_capacity(out_len);
    for k in 0..out_len {
        let lo = k * bin;
        for c in 0..d {
            let mut acc = 0.0;
            for t in lo..lo + bin {
                acc += rec.samples[t * d + c];
            }
            samples.push(acc / bin as f64);
        }
        labels.push(majority_label(&rec.labels[lo..lo + bin]));
    }
    Ok(RawRecording {
        subject: rec.subject,
        run: rec.run,
        rate_hz: rec.rate_hz / bin as f64,
        channels: d,
        samples,
        labels,
        source: rec.source.clone(),
    })
}

fn majority_label(window: &[usize]) -> usize {
    let max_label = *window.iter().max().unwrap();
    let mut counts = vec![0usize; max_label + 1];
    for &l in window {
        counts[l] += 1;
    }
    let best = *counts.iter().max().unwrap();
    let last = *window.last().unwrap();
    if counts[last] == best {
        last
    } else {
        counts.iter().position(|&c| c == best).unwrap()
    }
}

/// Linear interpolation of non-finite values, per channel, within one
/// recording. Leading/trailing gaps hold the nearest finite value; a channel
/// with no finite value at all becomes zero.
pub fn interpolate_missing(samples: &mut [f64], d: usize) {
    let t_len = samples.len() / d;
    for c in 0..d {
        let mut prev: Option<(usize, f64)> = None;
        let mut t = 0;
        while t < t_len {
            let v = samples[t * d + c];
            if v.is_finite() {
                if let Some((pt, pv)) = prev {
                    if t > pt + 1 {
                        let span = (t - pt) as f64;
                        for k in pt + 1..t {
                            let w = (k - pt) as f64 / span;
                            samples[k * d + c] = pv + (v - pv) * w;
                        }
                    }
                } else {
                    // leading gap: hold the first finite value
                    for k in 0..t {
                        samples[k * d + c] = v;
                    }
                }
                prev = Some((t, v));
            }
            t += 1;
        }
        match prev {
            Some((pt, pv)) => {
                for k in pt + 1..t_len {
                    samples[k * d + c] = pv;
                }
            }
            None => {
                for k in 0..t_len {
                    samples[k * d + c] = 0.0;
                }
            }
        }
    }
}

/// A complete dataset: the three splits in sequence and frame form plus
/// metadata.
#[derive(Debug, Clone)]
pub struct HarDataset {
    pub id: String,
    pub class_names: Vec<String>,
    pub window: usize,
    pub step: usize,
    pub train: Arc<SequenceDataset>,
    pub val: Arc<SequenceDataset>,
    pub test: Arc<SequenceDataset>,
    pub train_frames: FrameDataset,
    pub val_frames: FrameDataset,
    pub test_frames: FrameDataset,
}

impl HarDataset {
    /// Standardise all splits with training statistics, then window them.
    pub fn assemble(
        id: &str,
        class_names: Vec<String>,
        window: usize,
        step: usize,
        labelling: FrameLabelling,
        train: Vec<RawRecording>,
        val: Vec<RawRecording>,
        test: Vec<RawRecording>,
    ) -> Result<Self> {
        let n_classes = class_names.len();
        let mut train = SequenceDataset::from_recordings(&train, n_classes)?;
        let mut val = SequenceDataset::from_recordings(&val, n_classes)?;
        let mut test = SequenceDataset::from_recordings(&test, n_classes)?;
        let (mean, std) = train.channel_stats();
        train.standardize(&mean, &std);
        val.standardize(&mean, &std);
        test.standardize(&mean, &std);
        Self::from_sequences(id, class_names, window, step, labelling, train, val, test)
    }

    /// Wrap already-processed splits (cache loads, synthetic data).
    pub fn from_sequences(
        id: &str,
        class_names: Vec<String>,
        window: usize,
        step: usize,
        labelling: FrameLabelling,
        train: SequenceDataset,
        val: SequenceDataset,
        test: SequenceDataset,
    ) -> Result<Self> {
        let train = Arc::new(train);
        let val = Arc::new(val);
        let test = Arc::new(test);
        Ok(HarDataset {
            id: id.to_string(),
            train_frames: FrameDataset::build(train.clone(), window, step, labelling)?,
            val_frames: FrameDataset::build(val.clone(), window, step, labelling)?,
            test_frames: FrameDataset::build(test.clone(), window, step, labelling)?,
            class_names,
            window,
            step,
            train,
            val,
            test,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        self.train.channels()
    }

    pub fn rate_hz(&self) -> f64 {
        self.train.rate_hz()
    }
}

/// Parse a whitespace-separated numeric text file row by row. Non-numeric
/// fields (including literal NaN markers) come through as NaN; rows with the
/// wrong column count are rejected with their line number.
pub(crate) fn for_each_numeric_row<F>(
    path: &std::path::Path,
    expected_cols: usize,
    mut f: F,
) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<()>,
{
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| {
        HarError::Ingestion(format!("cannot open {}: {e}", path.display()))
    })?;
    let reader = std::io::BufReader::new(file);
    let mut fields: Vec<f64> = Vec::with_capacity(expected_cols);
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        fields.clear();
        for tok in line.split_whitespace() {
            fields.push(tok.parse::<f64>().unwrap_or(f64::NAN));
        }
        if fields.len() != expected_cols {
            return Err(HarError::Ingestion(format!(
                "{} line {}: {} columns, expected {expected_cols}",
                path.display(),
                line_no + 1,
                fields.len()
            )));
        }
        f(&fields)?;
    }
    Ok(())
}

/// Per-split ingestion summary, printed after every ingest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSummary {
    pub name: String,
    pub recordings: usize,
    pub samples: usize,
    pub frames: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SanityReport {
    pub expected_samples: usize,
    pub expected_frames: usize,
    pub samples_ok: bool,
    pub frames_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub id: String,
    pub channels: usize,
    pub n_classes: usize,
    pub rate_hz: f64,
    pub window: usize,
    pub step: usize,
    pub splits: Vec<SplitSummary>,
    /// Training-split check against the published totals, when known.
    pub train_sanity: Option<SanityReport>,
}

pub fn summarize_dataset(data: &HarDataset) -> IngestSummary {
    let split = |name: &str, seq: &SequenceDataset, frames: &FrameDataset| {
        let mut class_counts = vec![0usize; data.n_classes()];
        for &l in seq.labels() {
            class_counts[l] += 1;
        }
        SplitSummary {
            name: name.to_string(),
            recordings: seq.recordings().len(),
            samples: seq.len(),
            frames: frames.len(),
            class_counts,
        }
    };
    let splits = vec![
        split("train", &data.train, &data.train_frames),
        split("val", &data.val, &data.val_frames),
        split("test", &data.test, &data.test_frames),
    ];
    let train_sanity = expected_train_sizes(&data.id).map(|(samples, frames)| SanityReport {
        expected_samples: samples,
        expected_frames: frames,
        samples_ok: within_sanity_bounds(splits[0].samples, samples),
        frames_ok: within_sanity_bounds(splits[0].frames, frames),
    });
    IngestSummary {
        id: data.id.clone(),
        channels: data.channels(),
        n_classes: data.n_classes(),
        rate_hz: data.rate_hz(),
        window: data.window,
        step: data.step,
        splits,
        train_sanity,
    }
}

/// Expected training-split sizes from the published experiment protocol,
/// used as +-5% ingestion sanity bounds.
pub fn expected_train_sizes(id: &str) -> Option<(usize, usize)> {
    match id {
        "opp" => Some((650_000, 43_000)),
        "pamap2" => Some((473_000, 14_000)),
        "dg" => Some((470_000, 30_000)),
        _ => None,
    }
}

/// True when `actual` lies within +-5% of `expected`.
pub fn within_sanity_bounds(actual: usize, expected: usize) -> bool {
    let lo = expected as f64 * 0.95;
    let hi = expected as f64 * 1.05;
    (actual as f64) >= lo && (actual as f64) <= hi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(labels: Vec<usize>, d: usize, rate: f64) -> RawRecording {
        let t = labels.len();
        RawRecording {
            subject: 1,
            run: 1,
            rate_hz: rate,
            channels: d,
            samples: (0..t * d).map(|v| v as f64).collect(),
            labels,
            source: "test".into(),
        }
    }

    #[test]
    fn window_count_formula() {
        // T=60, window 30, step 15 -> 3 frames at offsets 0, 15, 30
        let r = rec(vec![0; 60], 2, 30.0);
        let frames = sliding_window(&r, 30, 15, FrameLabelling::Majority).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(
            (0..3).map(|i| frames.start(i)).collect::<Vec<_>>(),
            vec![0, 15, 30]
        );
    }

    #[test]
    fn disjoint_frames_when_step_equals_window() {
        let r = rec(vec![0; 64], 1, 32.0);
        let frames = sliding_window(&r, 16, 16, FrameLabelling::Majority).unwrap();
        assert_eq!(frames.len(), 4);
        for i in 1..frames.len() {
            assert_eq!(frames.start(i) - frames.start(i - 1), 16);
        }
    }

    #[test]
    fn uniform_labels_survive_any_rule() {
        let r = rec(vec![3; 40], 1, 32.0);
        for rule in [FrameLabelling::Majority, FrameLabelling::Last] {
            let frames = sliding_window(&r, 8, 4, rule).unwrap();
            assert!(frames.labels().iter().all(|&l| l == 3));
        }
    }

    #[test]
    fn majority_tie_breaks_toward_last_sample() {
        let mut r = rec(vec![0, 0, 1, 1], 1, 4.0);
        r.labels = vec![0, 0, 1, 1];
        let frames = sliding_window(&r, 4, 4, FrameLabelling::Majority).unwrap();
        assert_eq!(frames.label(0), 1);
    }

    #[test]
    fn short_recording_yields_zero_frames() {
        let r = rec(vec![0; 5], 1, 32.0);
        let frames = sliding_window(&r, 10, 5, FrameLabelling::Majority).unwrap();
        assert_eq!(frames.len(), 0);
    }

    #[test]
    fn frames_never_cross_recording_boundaries() {
        let a = rec(vec![0; 25], 1, 32.0);
        let mut b = rec(vec![1; 25], 1, 32.0);
        b.run = 2;
        let seq = Arc::new(SequenceDataset::from_recordings(&[a, b], 2).unwrap());
        let frames = FrameDataset::build(seq.clone(), 10, 5, FrameLabelling::Majority).unwrap();
        // per recording: (25-10)/5+1 = 4 frames
        assert_eq!(frames.len(), 8);
        for i in 0..frames.len() {
            let start = frames.start(i);
            let rec_idx = seq.recording_of(start);
            assert_eq!(seq.recording_of(start + 9), rec_idx);
        }
    }

    #[test]
    fn downsample_identity_when_rates_match() {
        let r = rec(vec![0, 1, 0, 1], 2, 100.0);
        let out = downsample(&r, 100.0).unwrap();
        assert_eq!(out.samples, r.samples);
        assert_eq!(out.rate_hz, 100.0);
    }

    #[test]
    fn downsample_constant_signal_stays_constant() {
        let mut r = rec(vec![0; 64], 2, 64.0);
        r.samples = vec![2.5; 128];
        let out = downsample(&r, 32.0).unwrap();
        assert_eq!(out.len(), 32);
        assert!((out.rate_hz - 32.0).abs() < 1e-12);
        assert!(out.samples.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn downsample_square_wave_averages_to_mid_level() {
        // period-2 square wave at 100 Hz, 2:1 decimation -> constant mid-level
        let mut r = rec(vec![0; 50], 1, 100.0);
        r.samples = (0..50).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = downsample(&r, 50.0).unwrap();
        assert!(out.samples.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn downsample_rejects_bad_targets() {
        let r = rec(vec![0; 10], 1, 32.0);
        assert!(downsample(&r, 0.0).is_err());
        assert!(downsample(&r, 64.0).is_err());
    }

    #[test]
    fn interpolation_fills_gaps_linearly() {
        let mut s = vec![1.0, f64::NAN, f64::NAN, 4.0, f64::NAN];
        interpolate_missing(&mut s, 1);
        assert_eq!(s, vec![1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn interpolation_holds_leading_edges() {
        let mut s = vec![f64::NAN, f64::NAN, 3.0, 5.0];
        interpolate_missing(&mut s, 1);
        assert_eq!(s, vec![3.0, 3.0, 3.0, 5.0]);
    }

    #[test]
    fn standardisation_uses_supplied_stats() {
        let r = rec(vec![0; 4], 1, 32.0);
        let mut seq = SequenceDataset::from_recordings(&[r], 1).unwrap();
        let (mean, std) = seq.channel_stats();
        seq.standardize(&mean, &std);
        let (m2, s2) = seq.channel_stats();
        assert!(m2[0].abs() < 1e-12);
        assert!((s2[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sanity_bounds_window() {
        assert!(within_sanity_bounds(650_000, 650_000));
        assert!(within_sanity_bounds(640_000, 650_000));
        assert!(!within_sanity_bounds(600_000, 650_000));
    }
}
