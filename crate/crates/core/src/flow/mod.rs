//! Dense TV-L1 optical flow between consecutive grayscale frames.
//!
//! Flow fields are the only thing that leaves this module: the exporter
//! writes `(u, v)` planes and never intensities.

mod export;
mod image;
mod pyramid;
mod tvl1;
mod warp;

pub use export::{dequantize, quantize, QuantizedFlow};
pub use pyramid::{build_pyramid, Pyramid};
pub use tvl1::{tv_l1_energy, tv_l1_flow, tv_l1_flow_traced, TvL1Params};
pub use warp::warp;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width * height == 0 {
            return Err(Error::InvalidInput("frame must have positive area".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(alloc::format!(
                "frame {}x{} needs {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidInput("frame intensities must be finite and in [0, 1]".into()));
        }
        Ok(Frame { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height])
    }

    /// 8-bit grayscale pixels mapped to `[0, 1]`.
    pub fn from_gray8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Frame::new(width, height, pixels.iter().map(|&p| p as f64 / 255.0).collect())
    }

    /// Interleaved 8-bit RGB converted with luma weights 0.299/0.587/0.114.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::InvalidInput("rgb buffer has the wrong length".into()));
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Frame::new(width, height, data)
    }

    /// Nearest 8-bit grayscale value per pixel.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| libm::floor(v * 255.0 + 0.5) as u8)
            .collect()
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        Frame { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel displacement `(u, v)` in pixels from one frame to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width * height == 0 || u.len() != width * height || v.len() != width * height {
            return Err(Error::InvalidInput("flow planes do not match dimensions".into()));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flow field"));
        }
        Ok(FlowField { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    /// Same displacement at every pixel.
    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    /// Builds a field by evaluating `f(x, y) -> (u, v)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        FlowField::new(width, height, u, v)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Mean endpoint error against a constant displacement, ignoring a
    /// border of `margin` pixels.
    pub fn mean_endpoint_error(&self, u: f64, v: f64, margin: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let (a, b) = self.at(x, y);
                sum += libm::sqrt((a - u) * (a - u) + (b - v) * (b - v));
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Mean of `u` and `v` over the interior.
    pub fn interior_mean(&self, margin: usize) -> (f64, f64) {
        let mut su = 0.0;
        let mut sv = 0.0;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let (a, b) = self.at(x, y);
                su += a;
                sv += b;
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        (su / n, sv / n)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::Frame;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smooth random texture: a sum of random plane waves, evaluated
    /// analytically so that exact sub-pixel translations are available.
    pub struct Texture {
        waves: Vec<(f64, f64, f64, f64)>,
    }

    impl Texture {
        pub fn random(seed: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let waves = (0..12)
                .map(|_| {
                    let k = rng.random_range(0.12..0.5);
                    let dir = rng.random_range(0.0..core::f64::consts::TAU);
                    let amp = rng.random_range(0.02..0.05);
                    let phase = rng.random_range(0.0..core::f64::consts::TAU);
                    (k * libm::cos(dir), k * libm::sin(dir), amp, phase)
                })
                .collect();
            Texture { waves }
        }

        pub fn eval(&self, x: f64, y: f64) -> f64 {
            let s: f64 = self
                .waves
                .iter()
                .map(|(kx, ky, a, p)| a * libm::sin(kx * x + ky * y + p))
                .sum();
            (0.5 + s).clamp(0.0, 1.0)
        }

        /// Frame sampled at `(x − dx, y − dy)`, i.e. the texture moved by `(dx, dy)`.
        pub fn frame(&self, w: usize, h: usize, dx: f64, dy: f64) -> Frame {
            let data = (0..w * h)
                .map(|i| self.eval((i % w) as f64 - dx, (i / w) as f64 - dy))
                .collect();
            Frame::new(w, h, data).unwrap()
        }
    }
}
