use alloc::vec::Vec;

use super::image::bilinear;
use super::{FlowField, Frame};
use crate::error::{shape_err, Result};

pub(crate) fn warp_plane(data: &[f64], w: usize, h: usize, u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out.push(bilinear(data, w, h, x as f64 + u[i], y as f64 + v[i]));
        }
    }
    out
}

/// Samples `frame` at `(x + u, y + v)` bilinearly; out-of-bounds reads clamp
/// to the border.
pub fn warp(frame: &Frame, flow: &FlowField) -> Result<Frame> {
    if frame.width() != flow.width() || frame.height() != flow.height() {
        return shape_err(
            "warp",
            &[frame.height(), frame.width()],
            &[flow.height(), flow.width()],
        );
    }
    let data = warp_plane(frame.data(), frame.width(), frame.height(), flow.u(), flow.v());
    Ok(Frame::from_parts(frame.width(), frame.height(), data))
}
