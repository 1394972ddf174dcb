//! Canonical binary cache for ingested datasets.
//!
//! Little-endian throughout. Header: magic, version, dataset id, rate,
//! channel count, window/step, class names. Body: three splits, each a list
//! of recordings with row-major samples and labels. Writing the same
//! dataset twice produces identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{FrameLabelling, HarDataset, RawRecording, SequenceDataset};
use crate::error::{HarError, Result};

const MAGIC: &[u8; 8] = b"HARCACHE";
const VERSION: u32 = 1;

pub fn write_cache(data: &HarDataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_string(&mut w, &data.id)?;
    w.write_all(&data.rate_hz().to_le_bytes())?;
    w.write_all(&(data.channels() as u32).to_le_bytes())?;
    w.write_all(&(data.window as u32).to_le_bytes())?;
    w.write_all(&(data.step as u32).to_le_bytes())?;
    w.write_all(&(data.n_classes() as u32).to_le_bytes())?;
    for name in &data.class_names {
        write_string(&mut w, name)?;
    }
    for split in [&data.train, &data.val, &data.test] {
        write_split(&mut w, split)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<HarDataset> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HarError::Ingestion(format!(
            "{} is not a dataset cache",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(HarError::Ingestion(format!(
            "cache version {version} unsupported (expected {VERSION})"
        )));
    }
    let id = read_string(&mut r)?;
    let rate = read_f64(&mut r)?;
    let d = read_u32(&mut r)? as usize;
    let window = read_u32(&mut r)? as usize;
    let step = read_u32(&mut r)? as usize;
    let n_classes = read_u32(&mut r)? as usize;
    let mut class_names = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        class_names.push(read_string(&mut r)?);
    }
    let train = read_split(&mut r, rate, d, n_classes)?;
    let val = read_split(&mut r, rate, d, n_classes)?;
    let test = read_split(&mut r, rate, d, n_classes)?;
    HarDataset::from_sequences(
        &id,
        class_names,
        window,
        step,
        FrameLabelling::Majority,
        train,
        val,
        test,
    )
}

fn write_split<W: Write>(w: &mut W, split: &SequenceDataset) -> Result<()> {
    w.write_all(&(split.recordings().len() as u32).to_le_bytes())?;
    for rec in split.recordings() {
        w.write_all(&rec.subject.to_le_bytes())?;
        w.write_all(&rec.run.to_le_bytes())?;
        write_string(w, &rec.source)?;
        w.write_all(&(rec.len as u64).to_le_bytes())?;
        for idx in rec.start..rec.start + rec.len {
            for &v in split.sample(idx) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for idx in rec.start..rec.start + rec.len {
            w.write_all(&(split.label(idx) as u32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_split<R: Read>(
    r: &mut R,
    rate: f64,
    d: usize,
    n_classes: usize,
) -> Result<SequenceDataset> {
    let n_recs = read_u32(r)? as usize;
    let mut recs = Vec::with_capacity(n_recs);
    for _ in 0..n_recs {
        let subject = read_u32(r)?;
        let run = read_u32(r)?;
        let source = read_string(r)?;
        let len = read_u64(r)? as usize;
        let mut samples = vec![0.0; len * d];
        for v in samples.iter_mut() {
            *v = read_f64(r)?;
        }
        let mut labels = vec![0usize; len];
        for l in labels.iter_mut() {
            *l = read_u32(r)? as usize;
        }
        recs.push(RawRecording {
            subject,
            run,
            rate_hz: rate,
            channels: d,
            samples,
            labels,
            source,
        });
    }
    SequenceDataset::from_recordings(&recs, n_classes)
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(HarError::Ingestion("implausible string length".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| HarError::Ingestion("invalid utf8 in cache".into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::SynthSpec;

    #[test]
    fn cache_round_trip_and_idempotence() {
        let data =
            crate::data::synthesize(&SynthSpec::desk_default(5).with_samples(2000, 500, 500))
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        write_cache(&data, &p1).unwrap();
        write_cache(&data, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2, "cache writes are byte-identical");

        let loaded = read_cache(&p1).unwrap();
        assert_eq!(loaded.id, data.id);
        assert_eq!(loaded.class_names, data.class_names);
        assert_eq!(loaded.train.len(), data.train.len());
        assert_eq!(loaded.train.labels(), data.train.labels());
        assert_eq!(loaded.train.sample(7), data.train.sample(7));
        assert_eq!(loaded.train_frames.len(), data.train_frames.len());
        assert_eq!(
            loaded.train.recordings().len(),
            data.train.recordings().len()
        );
    }

    #[test]
    fn rejects_non_cache_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.bin");
        std::fs::write(&p, b"not a cache at all").unwrap();
        assert!(read_cache(&p).is_err());
    }
}
