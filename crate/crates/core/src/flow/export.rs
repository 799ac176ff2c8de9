use alloc::vec::Vec;

use super::FlowField;
use crate::error::{Error, Result};

/// Flow clipped to `[−clip, clip]` and quantized to 8 bits per channel.
/// Holds motion only; there is no intensity plane.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFlow {
    pub width: usize,
    pub height: usize,
    pub clip: f64,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

fn to_byte(x: f64, clip: f64) -> u8 {
    let t = (x.clamp(-clip, clip) + clip) / (2.0 * clip) * 255.0;
    // half-up rounding: 0 maps to 127.5 → 128
    libm::floor(t + 0.5).clamp(0.0, 255.0) as u8
}

fn from_byte(b: u8, clip: f64) -> f64 {
    b as f64 / 255.0 * 2.0 * clip - clip
}

pub fn quantize(flow: &FlowField, clip: f64) -> Result<QuantizedFlow> {
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::InvalidInput("clip must be positive and finite".into()));
    }
    Ok(QuantizedFlow {
        width: flow.width(),
        height: flow.height(),
        clip,
        u: flow.u().iter().map(|&x| to_byte(x, clip)).collect(),
        v: flow.v().iter().map(|&x| to_byte(x, clip)).collect(),
    })
}

pub fn dequantize(q: &QuantizedFlow) -> Result<FlowField> {
    FlowField::new(
        q.width,
        q.height,
        q.u.iter().map(|&b| from_byte(b, q.clip)).collect(),
        q.v.iter().map(|&b| from_byte(b, q.clip)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_maps_to_midpoint() {
        let q = quantize(&FlowField::zeros(4, 3), 16.0).unwrap();
        assert!(q.u.iter().chain(&q.v).all(|&b| b == 128));
    }

    #[test]
    fn endpoints() {
        let f = FlowField::new(2, 1, alloc::vec![16.0, -16.0], alloc::vec![40.0, -40.0]).unwrap();
        let q = quantize(&f, 16.0).unwrap();
        assert_eq!(q.u, [255, 0]);
        assert_eq!(q.v, [255, 0]);
    }

    #[test]
    fn rejects_non_positive_clip() {
        assert!(quantize(&FlowField::zeros(2, 2), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_error_within_one_step(
            u in proptest::collection::vec(-20.0f64..20.0, 16),
            v in proptest::collection::vec(-20.0f64..20.0, 16),
            clip in 0.5f64..32.0,
        ) {
            let f = FlowField::new(4, 4, u.clone(), v.clone()).unwrap();
            let back = dequantize(&quantize(&f, clip).unwrap()).unwrap();
            for (a, b) in u.iter().zip(back.u()).chain(v.iter().zip(back.v())) {
                let a = a.clamp(-clip, clip);
                prop_assert!((a - b).abs() <= clip / 255.0 + 1e-12);
            }
        }
    }
}
