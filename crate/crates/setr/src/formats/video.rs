use std::path::Path;

use setr_core::flow::Frame;

use crate::codec::{read_file, write_file, Decoder, Encoder};
use crate::error::Result;

const MAGIC: &[u8; 8] = b"SETRVID0";

/// A grayscale frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFile {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: Vec<Vec<u8>>,
}

impl VideoFile {
    pub fn from_frames(frames: &[Frame], fps: f64) -> Self {
        VideoFile {
            width: frames.first().map_or(0, |f| f.width()),
            height: frames.first().map_or(0, |f| f.height()),
            fps,
            frames: frames.iter().map(|f| f.to_gray8()).collect(),
        }
    }

    pub fn to_frames(&self) -> Result<Vec<Frame>> {
        self.frames
            .iter()
            .map(|f| Ok(Frame::from_gray8(self.width, self.height, f)?))
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }
}

pub fn encode_video(v: &VideoFile) -> Vec<u8> {
    let mut e = Encoder::new(MAGIC);
    e.u32(v.width as u32);
    e.u32(v.height as u32);
    e.u32(v.frames.len() as u32);
    e.f64(v.fps);
    for f in &v.frames {
        e.bytes(f);
    }
    e.finish()
}

pub fn decode_video(bytes: &[u8], path: &Path) -> Result<VideoFile> {
    let mut d = Decoder::new(bytes, MAGIC, path)?;
    let width = d.u32()? as usize;
    let height = d.u32()? as usize;
    let count = d.u32()? as usize;
    let fps = d.f64()?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(d.error("fps must be positive"));
    }
    let size = width * height;
    d.checked_len(count as u64, size)?;
    let frames = (0..count).map(|_| Ok(d.take(size)?.to_vec())).collect::<Result<_>>()?;
    d.finish()?;
    Ok(VideoFile {
        width,
        height,
        fps,
        frames,
    })
}

pub fn write_video(path: &Path, v: &VideoFile) -> Result<()> {
    write_file(path, &encode_video(v))
}

pub fn read_video(path: &Path) -> Result<VideoFile> {
    decode_video(&read_file(path)?, path)
}
