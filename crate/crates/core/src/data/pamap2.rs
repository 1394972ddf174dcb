//! PAMAP2 dataset ingestion (prolonged physical activities).
//!
//! Each subject has a Protocol recording (run 1) and, for some subjects, an
//! Optional recording (run 2). Rows carry 54 whitespace-separated columns:
//! timestamp, activity id, heart rate and three 17-column IMUs. All 52
//! sensor columns are kept, transient samples (activity 0 or ids outside
//! the protocol set) are cut out (splitting recordings at the gaps), heart
//! rate dropouts are interpolated, and everything is decimated from 100 Hz
//! to 33.3 Hz.

use std::path::{Path, PathBuf};

use crate::data::{
    downsample, for_each_numeric_row, interpolate_missing, FrameLabelling, HarDataset,
    RawRecording,
};
use crate::error::{HarError, Result};

pub const CHANNELS: usize = 52;
pub const CLASSES: usize = 12;
pub const SOURCE_RATE_HZ: f64 = 100.0;
/// 100 Hz decimated by 3.
pub const TARGET_RATE_HZ: f64 = 100.0 / 3.0;
/// 5.12 s at 33.3 Hz.
pub const WINDOW: usize = 170;
/// 1 s stepping.
pub const STEP: usize = 33;

const TOTAL_COLUMNS: usize = 54;

/// The 12 protocol activities, in class order.
const ACTIVITY_IDS: [u32; 12] = [1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24];

pub fn class_names() -> Vec<String> {
    [
        "lying",
        "sitting",
        "standing",
        "walking",
        "running",
        "cycling",
        "nordic walking",
        "ascending stairs",
        "descending stairs",
        "vacuum cleaning",
        "ironing",
        "rope jumping",
    ]
    .map(str::to_string)
    .to_vec()
}

fn map_activity(raw: u32) -> Option<usize> {
    ACTIVITY_IDS.iter().position(|&id| id == raw)
}

struct SubjectRuns {
    subject: u32,
    protocol: PathBuf,
    optional: Option<PathBuf>,
}

fn locate_runs(root: &Path, subject: u32) -> SubjectRuns {
    let name = format!("subject10{}.dat", subject);
    SubjectRuns {
        subject,
        protocol: root.join("Protocol").join(&name),
        optional: {
            let p = root.join("Optional").join(&name);
            p.is_file().then_some(p)
        },
    }
}

/// Parse one file into contiguous labelled segments (one RawRecording per
/// stretch of protocol activity).
fn load_segments(path: &Path, subject: u32, run: u32) -> Result<Vec<RawRecording>> {
    let mut segments: Vec<RawRecording> = Vec::new();
    let mut cur_samples: Vec<f64> = Vec::new();
    let mut cur_labels: Vec<usize> = Vec::new();
    let mut flush = |samples: &mut Vec<f64>, labels: &mut Vec<usize>, seg_count: usize| {
        if labels.is_empty() {
            return seg_count;
        }
        let mut samples = std::mem::take(samples);
        interpolate_missing(&mut samples, CHANNELS);
        segments.push(RawRecording {
            subject,
            run,
            rate_hz: SOURCE_RATE_HZ,
            channels: CHANNELS,
            samples,
            labels: std::mem::take(labels),
            source: format!(
                "{}#seg{}",
                path.file_name().unwrap().to_string_lossy(),
                seg_count
            ),
        });
        seg_count + 1
    };
    let mut seg_count = 0usize;
    for_each_numeric_row(path, TOTAL_COLUMNS, |fields| {
        let activity = if fields[1].is_finite() {
            fields[1] as u32
        } else {
            0
        };
        match map_activity(activity) {
            Some(class) => {
                cur_samples.extend_from_slice(&fields[2..TOTAL_COLUMNS]);
                cur_labels.push(class);
            }
            None => {
                seg_count = flush(&mut cur_samples, &mut cur_labels, seg_count);
            }
        }
        Ok(())
    })?;
    flush(&mut cur_samples, &mut cur_labels, seg_count);
    Ok(segments)
}

fn load_run_downsampled(path: &Path, subject: u32, run: u32) -> Result<Vec<RawRecording>> {
    let mut out = Vec::new();
    for seg in load_segments(path, subject, run)? {
        if seg.len() < 3 {
            continue; // shorter than one decimation bin
        }
        out.push(downsample(&seg, TARGET_RATE_HZ)?);
    }
    Ok(out)
}

/// Load the dataset. Subject 5 (both runs) validates, subject 6 (both runs)
/// tests, the rest trains.
pub fn load_pamap2(root: &Path) -> Result<HarDataset> {
    let subjects: Vec<SubjectRuns> = (1..=9).map(|s| locate_runs(root, s)).collect();
    let missing: Vec<String> = subjects
        .iter()
        .filter(|s| !s.protocol.is_file())
        .map(|s| s.protocol.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(HarError::Ingestion(format!(
            "missing PAMAP2 protocol files: {}",
            missing.join(", ")
        )));
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for s in subjects {
        let sink: &mut Vec<RawRecording> = match s.subject {
            5 => &mut val,
            6 => &mut test,
            _ => &mut train,
        };
        sink.extend(load_run_downsampled(&s.protocol, s.subject, 1)?);
        if let Some(opt) = &s.optional {
            sink.extend(load_run_downsampled(opt, s.subject, 2)?);
        } else if matches!(s.subject, 5 | 6) {
            return Err(HarError::Ingestion(format!(
                "subject {} needs both runs (Optional file missing)",
                s.subject
            )));
        }
    }
    HarDataset::assemble(
        "pamap2",
        class_names(),
        WINDOW,
        STEP,
        FrameLabelling::Majority,
        train,
        val,
        test,
    )
}
