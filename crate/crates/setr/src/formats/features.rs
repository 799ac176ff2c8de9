use std::path::Path;

use setr_core::features::{SampleRecord, FEATURE_DIM};

use crate::codec::{read_file, write_file, Decoder, Encoder};
use crate::error::{Result, SetrError};

const MAGIC: &[u8; 8] = b"SETRFEAT";
const VERSION: u32 = 1;
pub const EXTENSION: &str = "feat";

/// Fails only for labels that do not fit in a byte.
pub fn encode_features(r: &SampleRecord) -> Result<Vec<u8>> {
    let label = u8::try_from(r.label)
        .map_err(|_| SetrError::Config(format!("label {} of {} does not fit in a byte", r.label, r.sample_id)))?;
    let mut e = Encoder::new(MAGIC);
    e.u32(VERSION);
    e.str(&r.sample_id);
    e.str(&r.patient_id);
    e.u8(label);
    e.f64(r.duration);
    e.u32(r.frames() as u32);
    e.u32(FEATURE_DIM as u32);
    for &v in r.features() {
        e.f32(v);
    }
    Ok(e.finish())
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<SampleRecord> {
    let mut d = Decoder::new(bytes, MAGIC, path)?;
    let version = d.u32()?;
    if version != VERSION {
        return Err(d.error(format!("unsupported feature version {version}")));
    }
    let sample = d.str()?;
    let patient = d.str()?;
    let label = d.u8()? as usize;
    let duration = d.f64()?;
    let frames = d.u32()? as u64;
    let dim = d.u32()? as usize;
    if dim != FEATURE_DIM {
        return Err(d.error(format!("feature dimension {dim}, expected {FEATURE_DIM}")));
    }
    let n = frames * dim as u64;
    d.checked_len(n, 4)?;
    let values = (0..n).map(|_| d.f32()).collect::<Result<Vec<_>>>()?;
    d.finish()?;
    SampleRecord::new(sample, patient, label, duration, values).map_err(|e| SetrError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_features(path: &Path, r: &SampleRecord) -> Result<()> {
    write_file(path, &encode_features(r)?)
}

pub fn read_features(path: &Path) -> Result<SampleRecord> {
    decode_features(&read_file(path)?, path)
}

/// Every `*.feat` file in `dir`, in file-name order.
pub fn read_dataset(dir: &Path) -> Result<Vec<SampleRecord>> {
    let entries = std::fs::read_dir(dir).map_err(|e| SetrError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| SetrError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == EXTENSION) {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(SetrError::Config(format!("no .{EXTENSION} files in {}", dir.display())));
    }
    paths.iter().map(|p| read_features(p)).collect()
}
