//! Persistent experiment records: a newline-delimited JSON sink with a
//! versioned schema header, exactly-once keys and crash-safe resume.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::hypersearch::Hyperparameters;
use crate::models::ModelFamily;

pub const SCHEMA_NAME: &str = "har-records";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Ok,
    Diverged,
    Timeout,
}

/// One experiment: configuration, seed, validation history and final test
/// scores. Records are immutable once appended and uniquely keyed by
/// (family, config hash, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub family: ModelFamily,
    pub config: Hyperparameters,
    pub config_hash: String,
    pub seed: u64,
    pub status: RecordStatus,
    /// Per-epoch validation mean F1.
    pub val_history: Vec<f64>,
    pub best_epoch: usize,
    /// Test mean F1 of the selected checkpoint; 0 for failed runs.
    pub test_mean_f1: f64,
    pub test_weighted_f1: f64,
    /// Frame-level scores, present for sample models.
    pub frame_mean_f1: Option<f64>,
    pub frame_weighted_f1: Option<f64>,
    pub wall_secs: f64,
}

impl ExperimentRecord {
    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.family, self.config_hash, self.seed)
    }

    /// The performance number the search distributions are built from.
    pub fn score(&self) -> f64 {
        self.test_mean_f1
    }
}

/// Deterministic configuration hash (FNV-1a over the canonical JSON form).
pub fn config_hash(config: &Hyperparameters) -> String {
    let json = serde_json::to_string(config).expect("config serialises");
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in json.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaHeader {
    schema: String,
    version: u32,
}

/// Append-only record store. Opening an existing file indexes its keys so a
/// restarted search skips completed work.
pub struct RecordSink {
    path: PathBuf,
    writer: BufWriter<File>,
    seen: HashSet<String>,
}

impl RecordSink {
    pub fn open(path: &Path) -> Result<Self> {
        let mut seen = HashSet::new();
        let exists = path.exists() && path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        if exists {
            for rec in load_records(path)? {
                seen.insert(rec.key());
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = BufWriter::new(file);
        if !exists {
            let header = SchemaHeader {
                schema: SCHEMA_NAME.into(),
                version: SCHEMA_VERSION,
            };
            serde_json::to_writer(&mut writer, &header)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(RecordSink {
            path: path.to_path_buf(),
            writer,
            seen,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.seen.contains(key)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    /// Append one record and flush it to disk. Duplicate keys are rejected.
    pub fn append(&mut self, rec: &ExperimentRecord) -> Result<()> {
        let key = rec.key();
        if self.seen.contains(&key) {
            return Err(HarError::RejectedInput(format!(
                "duplicate experiment key {key}"
            )));
        }
        serde_json::to_writer(&mut self.writer, rec)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.seen.insert(key);
        Ok(())
    }
}

/// Read every record from a sink file, validating the schema header.
pub fn load_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let file = File::open(path)
        .map_err(|e| HarError::Ingestion(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut saw_header = false;
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: SchemaHeader = serde_json::from_str(&line).map_err(|_| {
                HarError::Ingestion(format!(
                    "{} line 1 is not a schema header",
                    path.display()
                ))
            })?;
            if header.schema != SCHEMA_NAME || header.version != SCHEMA_VERSION {
                return Err(HarError::Ingestion(format!(
                    "unsupported record schema {}/{}",
                    header.schema, header.version
                )));
            }
            saw_header = true;
            continue;
        }
        let rec: ExperimentRecord = serde_json::from_str(&line).map_err(|e| {
            HarError::Ingestion(format!("{} line {}: {e}", path.display(), no + 1))
        })?;
        records.push(rec);
    }
    if !saw_header {
        return Err(HarError::Ingestion(format!(
            "{} is empty (no schema header)",
            path.display()
        )));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(seed: u64, score: f64) -> ExperimentRecord {
        let config = Hyperparameters::default_for(ModelFamily::Dnn);
        ExperimentRecord {
            family: ModelFamily::Dnn,
            config_hash: config_hash(&config),
            config,
            seed,
            status: RecordStatus::Ok,
            val_history: vec![0.1, 0.5, score],
            best_epoch: 3,
            test_mean_f1: score,
            test_weighted_f1: score,
            frame_mean_f1: None,
            frame_weighted_f1: None,
            wall_secs: 1.0,
        }
    }

    #[test]
    fn append_and_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        {
            let mut sink = RecordSink::open(&path).unwrap();
            sink.append(&sample_record(1, 0.5)).unwrap();
            sink.append(&sample_record(2, 0.7)).unwrap();
        }
        let records = load_records(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].seed, 2);
    }

    #[test]
    fn reopen_skips_existing_keys_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        {
            let mut sink = RecordSink::open(&path).unwrap();
            sink.append(&sample_record(1, 0.5)).unwrap();
        }
        let mut sink = RecordSink::open(&path).unwrap();
        assert_eq!(sink.len(), 1);
        assert!(sink.contains(&sample_record(1, 0.5).key()));
        assert!(sink.append(&sample_record(1, 0.9)).is_err());
        sink.append(&sample_record(2, 0.9)).unwrap();
        assert_eq!(load_records(&path).unwrap().len(), 2);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = Hyperparameters::default_for(ModelFamily::Dnn);
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.units += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn junk_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.jsonl");
        std::fs::write(&path, "this is not json\n").unwrap();
        assert!(load_records(&path).is_err());
    }
}
