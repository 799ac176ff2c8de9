use alloc::vec::Vec;

use super::image::{gaussian_blur, resize};
use super::Frame;
use crate::error::{Error, Result};

/// Smallest side allowed at any pyramid level.
pub const MIN_LEVEL_SIZE: usize = 8;

/// Coarse-to-fine image stack; `levels[0]` is the input.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<Frame>,
    /// Level count that was asked for, which may exceed `levels.len()` when
    /// the image is too small.
    pub requested: usize,
}

impl Pyramid {
    pub fn clamped(&self) -> bool {
        self.levels.len() < self.requested
    }
}

pub(crate) fn level_size(w: usize, h: usize, scale: f64) -> (usize, usize) {
    (
        libm::round(w as f64 * scale) as usize,
        libm::round(h as f64 * scale) as usize,
    )
}

/// Anti-aliasing blur width for a resampling factor.
pub(crate) fn pyramid_sigma(scale: f64) -> f64 {
    0.6 * libm::sqrt(1.0 / (scale * scale) - 1.0)
}

pub(crate) fn downsample(data: &[f64], w: usize, h: usize, nw: usize, nh: usize, scale: f64) -> Vec<f64> {
    let smooth = gaussian_blur(data, w, h, pyramid_sigma(scale));
    resize(&smooth, w, h, nw, nh)
}

/// Gaussian pyramid. Levels that would fall below 8×8 are dropped and the
/// truncation is reported through [`Pyramid::clamped`].
pub fn build_pyramid(frame: &Frame, levels: usize, scale: f64) -> Result<Pyramid> {
    if levels == 0 {
        return Err(Error::InvalidInput("pyramid needs at least one level".into()));
    }
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::InvalidInput("pyramid scale must be in (0, 1)".into()));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(frame.clone());
    while out.len() < levels {
        let prev = out.last().expect("non-empty");
        let (nw, nh) = level_size(prev.width(), prev.height(), scale);
        if nw < MIN_LEVEL_SIZE || nh < MIN_LEVEL_SIZE {
            break;
        }
        let data = downsample(prev.data(), prev.width(), prev.height(), nw, nh, scale);
        out.push(Frame::from_parts(nw, nh, data));
    }
    Ok(Pyramid {
        levels: out,
        requested: levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Frame {
        let data = (0..w * h).map(|i| ((i % w) as f64) / w as f64).collect();
        Frame::new(w, h, data).unwrap()
    }

    #[test]
    fn geometric_sizes() {
        let p = build_pyramid(&ramp(64, 64), 3, 0.5).unwrap();
        let sizes: Vec<_> = p.levels.iter().map(|f| (f.width(), f.height())).collect();
        assert_eq!(sizes, [(64, 64), (32, 32), (16, 16)]);
        assert!(!p.clamped());
    }

    #[test]
    fn single_level_is_input() {
        let f = ramp(20, 12);
        let p = build_pyramid(&f, 1, 0.5).unwrap();
        assert_eq!(p.levels.len(), 1);
        assert_eq!(p.levels[0], f);
    }

    #[test]
    fn constant_stays_constant() {
        let f = Frame::constant(40, 40, 0.3).unwrap();
        let p = build_pyramid(&f, 3, 0.5).unwrap();
        for level in &p.levels {
            assert!(level.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn small_images_clamp_level_count() {
        let p = build_pyramid(&ramp(20, 20), 5, 0.5).unwrap();
        // 20 → 10 → 5 (rejected)
        assert_eq!(p.levels.len(), 2);
        assert!(p.clamped());
    }
}
