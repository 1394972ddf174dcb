//! Opportunity dataset ingestion (kitchen-activity gesture recognition).
//!
//! Reads the published column-oriented text files (250 whitespace-separated
//! columns per row), selects the 79-channel packet-loss-free sensor subset
//! (upper-limb and back accelerometers, back IMU, arm IMU accelerometers and
//! the complete foot IMUs), interpolates wireless dropouts and maps the
//! mid-level gesture track to 18 classes (17 gestures + Null).

use std::path::{Path, PathBuf};

use crate::data::{
    for_each_numeric_row, interpolate_missing, FrameLabelling, HarDataset, RawRecording,
};
use crate::error::{HarError, Result};

pub const CHANNELS: usize = 79;
pub const CLASSES: usize = 18;
pub const RATE_HZ: f64 = 30.0;
/// 1-second windows with 50% overlap.
pub const WINDOW: usize = 30;
pub const STEP: usize = 15;

const TOTAL_COLUMNS: usize = 250;
const LABEL_COLUMN: usize = 250; // mid-level gestures (1-based)

/// Mid-level gesture label ids in the published legend, mapped to 1..=17;
/// 0 stays the Null class.
const GESTURE_IDS: [u32; 17] = [
    406516, 406517, 404516, 404517, 406520, 404520, 406505, 404505, 406519, 404519, 406511,
    404511, 406508, 404508, 408512, 407521, 405506,
];

/// 1-based column indices of the 79 retained sensor channels.
pub fn sensor_columns() -> Vec<usize> {
    let mut cols = Vec::with_capacity(CHANNELS);
    let mut push_range = |lo: usize, hi: usize| cols.extend(lo..=hi);
    push_range(8, 19); // LUA^, RUA_, LH, BACK triaxial accelerometers
    push_range(23, 36); // RWR, RUA^, LUA_, LWR, RH accelerometers (RH z dropped)
    push_range(38, 46); // BACK IMU acc/gyro/mag
    push_range(51, 53); // RUA IMU acc
    push_range(64, 66); // RLA IMU acc
    push_range(77, 79); // LUA IMU acc
    push_range(90, 92); // LLA IMU acc
    push_range(103, 118); // left shoe IMU, complete
    push_range(119, 134); // right shoe IMU, complete
    debug_assert_eq!(cols.len(), CHANNELS);
    cols
}

pub fn class_names() -> Vec<String> {
    let mut names = vec!["Null".to_string()];
    names.extend(
        [
            "Open Door 1",
            "Open Door 2",
            "Close Door 1",
            "Close Door 2",
            "Open Fridge",
            "Close Fridge",
            "Open Dishwasher",
            "Close Dishwasher",
            "Open Drawer 1",
            "Close Drawer 1",
            "Open Drawer 2",
            "Close Drawer 2",
            "Open Drawer 3",
            "Close Drawer 3",
            "Clean Table",
            "Drink from Cup",
            "Toggle Switch",
        ]
        .map(str::to_string),
    );
    names
}

fn map_label(raw: u32) -> Result<usize> {
    if raw == 0 {
        return Ok(0);
    }
    GESTURE_IDS
        .iter()
        .position(|&id| id == raw)
        .map(|i| i + 1)
        .ok_or_else(|| HarError::Ingestion(format!("unknown gesture label {raw}")))
}

fn run_files() -> Vec<(u32, u32, String)> {
    let mut files = Vec::new();
    for subject in 1..=4u32 {
        for adl in 1..=5u32 {
            files.push((subject, adl, format!("S{subject}-ADL{adl}.dat")));
        }
        // Drill sessions recorded as run 6
        files.push((subject, 6, format!("S{subject}-Drill.dat")));
    }
    files
}

fn resolve_root(root: &Path) -> PathBuf {
    let nested = root.join("dataset");
    if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

fn load_run(path: &Path, subject: u32, run: u32) -> Result<RawRecording> {
    let cols = sensor_columns();
    let mut samples: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for_each_numeric_row(path, TOTAL_COLUMNS, |fields| {
        for &c in &cols {
            samples.push(fields[c - 1]);
        }
        let raw = fields[LABEL_COLUMN - 1];
        let raw = if raw.is_finite() { raw as u32 } else { 0 };
        labels.push(map_label(raw)?);
        Ok(())
    })?;
    interpolate_missing(&mut samples, CHANNELS);
    Ok(RawRecording {
        subject,
        run,
        rate_hz: RATE_HZ,
        channels: CHANNELS,
        samples,
        labels,
        source: path.file_name().unwrap().to_string_lossy().into_owned(),
    })
}

/// Load the dataset from its published layout. Validation is run 2 of
/// subject 1; the test set is runs 4 and 5 of subjects 2 and 3; everything
/// else trains.
pub fn load_opportunity(root: &Path) -> Result<HarDataset> {
    let dir = resolve_root(root);
    let files = run_files();
    let missing: Vec<String> = files
        .iter()
        .filter(|(_, _, name)| !dir.join(name).is_file())
        .map(|(_, _, name)| name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(HarError::Ingestion(format!(
            "missing Opportunity runs in {}: {}",
            dir.display(),
            missing.join(", ")
        )));
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (subject, run, name) in files {
        let rec = load_run(&dir.join(&name), subject, run)?;
        match (subject, run) {
            (1, 2) => val.push(rec),
            (2, 4) | (2, 5) | (3, 4) | (3, 5) => test.push(rec),
            _ => train.push(rec),
        }
    }
    HarDataset::assemble(
        "opp",
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

    #[test]
    fn channel_selection_has_79_columns() {
        let cols = sensor_columns();
        assert_eq!(cols.len(), 79);
        let mut sorted = cols.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 79, "columns are unique");
        assert!(cols.iter().all(|&c| (2..=243).contains(&c)));
    }

    #[test]
    fn label_mapping_covers_all_gestures() {
        assert_eq!(map_label(0).unwrap(), 0);
        assert_eq!(map_label(406516).unwrap(), 1);
        assert_eq!(map_label(405506).unwrap(), 17);
        assert!(map_label(999999).is_err());
    }

    fn write_fixture_run(dir: &Path, name: &str, rows: usize, label: u32) {
        let mut f = std::fs::File::create(dir.join(name)).unwrap();
        for t in 0..rows {
            let mut fields = vec!["0".to_string(); 250];
            fields[0] = format!("{}", t * 33);
            for c in 1..243 {
                fields[c] = format!("{:.3}", (t + c) as f64 * 0.01);
            }
            // one NaN channel dropout to exercise interpolation
            if t == rows / 2 {
                fields[7] = "NaN".into();
            }
            fields[249] = label.to_string();
            writeln!(f, "{}", fields.join(" ")).unwrap();
        }
    }

    #[test]
    fn loads_fixture_layout_with_correct_splits() {
        let dir = tempfile::tempdir().unwrap();
        for subject in 1..=4 {
            for adl in 1..=5 {
                let label = if adl == 1 { 406516 } else { 0 };
                write_fixture_run(dir.path(), &format!("S{subject}-ADL{adl}.dat"), 90, label);
            }
            write_fixture_run(dir.path(), &format!("S{subject}-Drill.dat"), 90, 404516);
        }
        let data = load_opportunity(dir.path()).unwrap();
        assert_eq!(data.channels(), 79);
        assert_eq!(data.n_classes(), 18);
        assert_eq!(data.val.recordings().len(), 1);
        assert_eq!(data.val.recordings()[0].subject, 1);
        assert_eq!(data.val.recordings()[0].run, 2);
        assert_eq!(data.test.recordings().len(), 4);
        assert_eq!(data.train.recordings().len(), 19);
        // 90-sample runs at window 30 / step 15 -> 5 frames each
        assert_eq!(data.val_frames.len(), 5);
        assert!(data
            .train
            .labels()
            .iter()
            .all(|&l| l < 18));
    }

    #[test]
    fn missing_files_are_itemised() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_run(dir.path(), "S1-ADL1.dat", 10, 0);
        let err = load_opportunity(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("S1-ADL2.dat"));
        assert!(msg.contains("S4-Drill.dat"));
    }
}
