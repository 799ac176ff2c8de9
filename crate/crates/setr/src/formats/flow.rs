use std::path::Path;

use setr_core::flow::QuantizedFlow;

use crate::codec::{read_file, write_file, Decoder, Encoder};
use crate::error::Result;

const MAGIC: &[u8; 8] = b"SETRFLW0";

/// Quantized flow for every consecutive frame pair of a video.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFile {
    pub width: usize,
    pub height: usize,
    pub clip: f64,
    pub pairs: Vec<QuantizedFlow>,
}

pub fn encode_flow(f: &FlowFile) -> Vec<u8> {
    let mut e = Encoder::new(MAGIC);
    e.u32(f.width as u32);
    e.u32(f.height as u32);
    e.u32(f.pairs.len() as u32);
    e.f64(f.clip);
    for p in &f.pairs {
        e.bytes(&p.u);
        e.bytes(&p.v);
    }
    e.finish()
}

pub fn decode_flow(bytes: &[u8], path: &Path) -> Result<FlowFile> {
    let mut d = Decoder::new(bytes, MAGIC, path)?;
    let width = d.u32()? as usize;
    let height = d.u32()? as usize;
    let count = d.u32()? as usize;
    let clip = d.f64()?;
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(d.error("clip must be positive"));
    }
    let size = width * height;
    d.checked_len(count as u64, 2 * size)?;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let u = d.take(size)?.to_vec();
        let v = d.take(size)?.to_vec();
        pairs.push(QuantizedFlow {
            width,
            height,
            clip,
            u,
            v,
        });
    }
    d.finish()?;
    Ok(FlowFile {
        width,
        height,
        clip,
        pairs,
    })
}

pub fn write_flow(path: &Path, f: &FlowFile) -> Result<()> {
    write_file(path, &encode_flow(f))
}

pub fn read_flow(path: &Path) -> Result<FlowFile> {
    decode_flow(&read_file(path)?, path)
}
