//! Daphnet Gait dataset ingestion (freezing-of-gait detection).
//!
//! Files S{xx}R{yy}.txt carry 11 columns: time in ms, nine accelerometer
//! channels (ankle, knee, trunk) and an annotation. Annotation 0 marks
//! samples outside the experiment protocol and is cut out (splitting
//! recordings); 1 is no-freeze, 2 is freeze. The 64 Hz stream is decimated
//! to 32 Hz.

use std::path::{Path, PathBuf};

use crate::data::{downsample, for_each_numeric_row, FrameLabelling, HarDataset, RawRecording};
use crate::error::{HarError, Result};

pub const CHANNELS: usize = 9;
pub const CLASSES: usize = 2;
pub const SOURCE_RATE_HZ: f64 = 64.0;
pub const TARGET_RATE_HZ: f64 = 32.0;
/// 1-second windows with 50% overlap.
pub const WINDOW: usize = 32;
pub const STEP: usize = 16;

const TOTAL_COLUMNS: usize = 11;

pub fn class_names() -> Vec<String> {
    vec!["no-freeze".into(), "freeze".into()]
}

/// Runs per subject in the published release.
const RUNS: [(u32, u32); 17] = [
    (1, 1),
    (1, 2),
    (2, 1),
    (2, 2),
    (3, 1),
    (3, 2),
    (3, 3),
    (4, 1),
    (5, 1),
    (5, 2),
    (6, 1),
    (6, 2),
    (7, 1),
    (7, 2),
    (8, 1),
    (9, 1),
    (10, 1),
];

fn file_name(subject: u32, run: u32) -> String {
    format!("S{subject:02}R{run:02}.txt")
}

fn resolve_root(root: &Path) -> PathBuf {
    let nested = root.join("dataset");
    if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

/// Parse one file into in-protocol segments at the source rate.
fn load_segments(path: &Path, subject: u32, run: u32) -> Result<Vec<RawRecording>> {
    let mut segments = Vec::new();
    let mut cur_samples: Vec<f64> = Vec::new();
    let mut cur_labels: Vec<usize> = Vec::new();
    let mut seg_count = 0usize;
    let mut flush =
        |samples: &mut Vec<f64>, labels: &mut Vec<usize>, seg_count: &mut usize| {
            if labels.is_empty() {
                return;
            }
            segments.push(RawRecording {
                subject,
                run,
                rate_hz: SOURCE_RATE_HZ,
                channels: CHANNELS,
                samples: std::mem::take(samples),
                labels: std::mem::take(labels),
                source: format!(
                    "{}#seg{}",
                    path.file_name().unwrap().to_string_lossy(),
                    seg_count
                ),
            });
            *seg_count += 1;
        };
    for_each_numeric_row(path, TOTAL_COLUMNS, |fields| {
        let annotation = if fields[10].is_finite() {
            fields[10] as u32
        } else {
            0
        };
        match annotation {
            1 | 2 => {
                cur_samples.extend_from_slice(&fields[1..10]);
                cur_labels.push((annotation - 1) as usize);
            }
            _ => flush(&mut cur_samples, &mut cur_labels, &mut seg_count),
        }
        Ok(())
    })?;
    flush(&mut cur_samples, &mut cur_labels, &mut seg_count);
    Ok(segments)
}

fn load_run_downsampled(path: &Path, subject: u32, run: u32) -> Result<Vec<RawRecording>> {
    let mut out = Vec::new();
    for seg in load_segments(path, subject, run)? {
        if seg.len() < 2 {
            continue;
        }
        out.push(downsample(&seg, TARGET_RATE_HZ)?);
    }
    Ok(out)
}

/// Load the dataset. Run 1 of subject 9 validates, runs 1 and 2 of subject 2
/// test, the rest trains.
pub fn load_daphnet(root: &Path) -> Result<HarDataset> {
    let dir = resolve_root(root);
    let missing: Vec<String> = RUNS
        .iter()
        .filter(|&&(s, r)| !dir.join(file_name(s, r)).is_file())
        .map(|&(s, r)| file_name(s, r))
        .collect();
    if !missing.is_empty() {
        return Err(HarError::Ingestion(format!(
            "missing Daphnet runs in {}: {}",
            dir.display(),
            missing.join(", ")
        )));
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for &(subject, run) in &RUNS {
        let recs = load_run_downsampled(&dir.join(file_name(subject, run)), subject, run)?;
        match (subject, run) {
            (9, 1) => val.extend(recs),
            (2, 1) | (2, 2) => test.extend(recs),
            _ => train.extend(recs),
        }
    }
    HarDataset::assemble(
        "dg",
        class_names(),
        WINDOW,
        STEP,
        FrameLabelling::Majority,
        train,
        val,
        test,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_fixture(path: &Path, rows: usize, annotation_of: impl Fn(usize) -> u32) {
        let mut f = std::fs::File::create(path).unwrap();
        for t in 0..rows {
            let mut fields = vec!["0".to_string(); 11];
            fields[0] = format!("{}", t * 15);
            for c in 1..10 {
                fields[c] = format!("{}", ((t + c) % 50) as f64 * 10.0);
            }
            fields[10] = annotation_of(t).to_string();
            writeln!(f, "{}", fields.join(" ")).unwrap();
        }
    }

    #[test]
    fn out_of_protocol_samples_are_cut() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("S01R01.txt");
        write_fixture(&path, 600, |t| match t {
            0..=199 => 0, // setup, excluded
            200..=399 => 1,
            _ => 2,
        });
        let segs = load_run_downsampled(&path, 1, 1).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 200); // 400 in-protocol rows / bin 2
        assert!((segs[0].rate_hz - 32.0).abs() < 1e-12);
        let freeze = segs[0].labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(freeze, 100);
    }

    #[test]
    fn loads_fixture_layout_with_correct_splits() {
        let dir = tempfile::tempdir().unwrap();
        for &(s, r) in &RUNS {
            write_fixture(&dir.path().join(file_name(s, r)), 400, |t| {
                1 + (t / 100 % 2) as u32
            });
        }
        let data = load_daphnet(dir.path()).unwrap();
        assert_eq!(data.channels(), 9);
        assert_eq!(data.n_classes(), 2);
        assert_eq!(data.val.recordings().len(), 1);
        assert_eq!(data.val.recordings()[0].subject, 9);
        assert_eq!(data.test.recordings().len(), 2);
        assert!(data
            .test
            .recordings()
            .iter()
            .all(|r| r.subject == 2));
        assert_eq!(data.train.recordings().len(), 14);
    }

    #[test]
    fn missing_runs_are_itemised() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(&dir.path().join("S01R01.txt"), 10, |_| 1);
        let err = load_daphnet(dir.path()).unwrap_err();
        assert!(err.to_string().contains("S09R01.txt"));
    }
}
