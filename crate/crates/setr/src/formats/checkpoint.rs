use std::path::Path;

use setr_core::model::{SetrConfig, SetrParams};
use setr_core::Tensor;

use crate::codec::{read_file, write_file, Decoder, Encoder};
use crate::error::Result;

const MAGIC: &[u8; 8] = b"SETRCKPT";
const VERSION: u32 = 1;

/// Encodes named arrays in the given order.
pub fn encode_checkpoint(named: &[(String, Tensor)]) -> Vec<u8> {
    let mut e = Encoder::new(MAGIC);
    e.u32(VERSION);
    e.u32(named.len() as u32);
    for (name, t) in named {
        e.str(name);
        e.u32(t.rank() as u32);
        for &d in t.shape() {
            e.u64(d as u64);
        }
        for &v in t.data() {
            e.f64(v);
        }
    }
    e.finish()
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut d = Decoder::new(bytes, MAGIC, path)?;
    let version = d.u32()?;
    if version != VERSION {
        return Err(d.error(format!("unsupported checkpoint version {version}")));
    }
    let count = d.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name = d.str()?;
        let rank = d.u32()? as usize;
        d.checked_len(rank as u64, 8)?;
        let mut shape = Vec::with_capacity(rank);
        let mut elems: u64 = 1;
        for _ in 0..rank {
            let dim = d.u64()?;
            elems = elems.checked_mul(dim).ok_or_else(|| d.error("array size overflows"))?;
            shape.push(dim as usize);
        }
        d.checked_len(elems, 8)?;
        let data = (0..elems).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data).map_err(|e| d.error(format!("array {name}: {e}")))?;
        out.push((name, t));
    }
    d.finish()?;
    Ok(out)
}

pub fn write_checkpoint(path: &Path, params: &SetrParams) -> Result<()> {
    let named: Vec<(String, Tensor)> = params.names().into_iter().zip(params.iter().cloned()).collect();
    write_file(path, &encode_checkpoint(&named))
}

/// Reads a checkpoint and checks it against `cfg`.
pub fn read_checkpoint(path: &Path, cfg: &SetrConfig) -> Result<SetrParams> {
    let named = decode_checkpoint(&read_file(path)?, path)?;
    Ok(SetrParams::from_named(cfg, named)?)
}
