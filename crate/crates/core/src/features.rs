//! Per-frame motion descriptors and training records.
//!
//! Each flow field becomes a 512-value histogram of flow: a 4×4 spatial
//! grid, 16 orientation bins centred on multiples of π/8 (bin 0 is centred
//! on angle 0), and two statistics per bin (pixel fraction and mean
//! magnitude). The vector is L2-normalized; zero motion gives the zero
//! vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::tensor::Tensor;

pub const GRID: usize = 4;
pub const ORIENTATION_BINS: usize = 16;
pub const STATS: usize = 2;
/// Length of a per-frame feature vector.
pub const FEATURE_DIM: usize = GRID * GRID * ORIENTATION_BINS * STATS;

/// Displacements at or below this magnitude count as no motion.
const MOTION_EPS: f64 = 1e-9;

#[inline]
pub fn feature_index(cell_x: usize, cell_y: usize, bin: usize, stat: usize) -> usize {
    ((cell_y * GRID + cell_x) * ORIENTATION_BINS + bin) * STATS + stat
}

/// Orientation bin of a displacement, bins centred on `k·2π/16`.
pub fn orientation_bin(u: f64, v: f64) -> usize {
    let width = core::f64::consts::TAU / ORIENTATION_BINS as f64;
    let a = libm::atan2(v, u);
    let b = libm::floor(a / width + 0.5) as i64;
    b.rem_euclid(ORIENTATION_BINS as i64) as usize
}

/// Histogram-of-flow descriptor of one flow field.
pub fn frame_descriptor(flow: &FlowField) -> Vec<f64> {
    let (w, h) = (flow.width(), flow.height());
    let mut out = vec![0.0; FEATURE_DIM];
    let mut cell_pixels = [0usize; GRID * GRID];
    for y in 0..h {
        let cy = y * GRID / h;
        for x in 0..w {
            let cx = x * GRID / w;
            cell_pixels[cy * GRID + cx] += 1;
            let (u, v) = flow.at(x, y);
            let m = libm::sqrt(u * u + v * v);
            if m <= MOTION_EPS {
                continue;
            }
            let b = orientation_bin(u, v);
            out[feature_index(cx, cy, b, 0)] += 1.0;
            out[feature_index(cx, cy, b, 1)] += m;
        }
    }
    for cy in 0..GRID {
        for cx in 0..GRID {
            let n = cell_pixels[cy * GRID + cx].max(1) as f64;
            for b in 0..ORIENTATION_BINS {
                for s in 0..STATS {
                    out[feature_index(cx, cy, b, s)] /= n;
                }
            }
        }
    }
    let norm = libm::sqrt(out.iter().map(|v| v * v).sum::<f64>());
    if norm > 0.0 {
        for v in &mut out {
            *v /= norm;
        }
    }
    out
}

/// One descriptor per flow field.
pub fn extract_spatial_features(flows: &[FlowField]) -> Result<Vec<Vec<f64>>> {
    if flows.is_empty() {
        return Err(Error::InvalidInput("need at least one flow field".into()));
    }
    Ok(flows.iter().map(frame_descriptor).collect())
}

/// Uniform temporal sampling of `n` indices from the first `prefix_frames`
/// frames: `⌊i·prefix/n⌋`. Indices repeat when the prefix is shorter than
/// `n`.
pub fn sample_frames(prefix_frames: usize, n: usize) -> Vec<usize> {
    let p = prefix_frames.max(1);
    (0..n).map(|i| i * p / n).collect()
}

/// A labelled sample: per-frame features plus identifying metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub patient_id: String,
    pub label: usize,
    /// Duration of the underlying video in seconds.
    pub duration: f64,
    frames: usize,
    features: Vec<f32>,
}

impl SampleRecord {
    pub fn new(
        sample_id: impl Into<String>,
        patient_id: impl Into<String>,
        label: usize,
        duration: f64,
        features: Vec<f32>,
    ) -> Result<Self> {
        if features.is_empty() || !features.len().is_multiple_of(FEATURE_DIM) {
            return Err(Error::InvalidInput(alloc::format!(
                "feature buffer of {} values is not a positive multiple of {}",
                features.len(),
                FEATURE_DIM
            )));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidInput("duration must be positive".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample features"));
        }
        Ok(SampleRecord {
            sample_id: sample_id.into(),
            patient_id: patient_id.into(),
            label,
            duration,
            frames: features.len() / FEATURE_DIM,
            features,
        })
    }

    pub fn from_descriptors(
        sample_id: impl Into<String>,
        patient_id: impl Into<String>,
        label: usize,
        duration: f64,
        descriptors: &[Vec<f64>],
    ) -> Result<Self> {
        let mut features = Vec::with_capacity(descriptors.len() * FEATURE_DIM);
        for d in descriptors {
            if d.len() != FEATURE_DIM {
                return Err(Error::InvalidInput("descriptor length must be 512".into()));
            }
            features.extend(d.iter().map(|&v| v as f32));
        }
        SampleRecord::new(sample_id, patient_id, label, duration, features)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    /// First `frames` frames with the duration scaled to `duration`.
    pub(crate) fn truncated(&self, frames: usize, duration: f64) -> SampleRecord {
        SampleRecord {
            sample_id: self.sample_id.clone(),
            patient_id: self.patient_id.clone(),
            label: self.label,
            duration,
            frames,
            features: self.features[..frames * FEATURE_DIM].to_vec(),
        }
    }

    /// `n × 512` matrix of uniformly sampled frames.
    pub fn sampled_features(&self, n: usize) -> Tensor {
        let mut data = Vec::with_capacity(n * FEATURE_DIM);
        for i in sample_frames(self.frames, n) {
            data.extend(self.frame(i).iter().map(|&v| v as f64));
        }
        Tensor::matrix(n, FEATURE_DIM, data).expect("n×512")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_flow_gives_zero_vector() {
        let d = frame_descriptor(&FlowField::zeros(16, 16));
        assert_eq!(d.len(), 512);
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uniform_flow_fills_bin_zero_everywhere() {
        let d = frame_descriptor(&FlowField::uniform(16, 12, 1.0, 0.0));
        for cy in 0..GRID {
            for cx in 0..GRID {
                for b in 0..ORIENTATION_BINS {
                    for s in 0..STATS {
                        let v = d[feature_index(cx, cy, b, s)];
                        if b == 0 {
                            assert_eq!(v, d[feature_index(0, 0, 0, s)]);
                            assert!(v > 0.0);
                        } else {
                            assert_eq!(v, 0.0);
                        }
                    }
                }
            }
        }
        let norm: f64 = d.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    /// Orientation mass per bin of the field (−y, x) on a disc, by
    /// supersampled integration of the disc independent of the descriptor.
    fn disc_orientation_oracle(radius: f64) -> [f64; ORIENTATION_BINS] {
        let mut hist = [0.0; ORIENTATION_BINS];
        let steps = 800;
        let h = 2.0 * radius / steps as f64;
        for i in 0..steps {
            for j in 0..steps {
                let x = -radius + (i as f64 + 0.5) * h;
                let y = -radius + (j as f64 + 0.5) * h;
                if x * x + y * y > radius * radius {
                    continue;
                }
                // direction of (−y, x) is the polar angle plus π/2
                let a = libm::atan2(y, x) + PI / 2.0;
                let w = 2.0 * PI / ORIENTATION_BINS as f64;
                let b = (libm::floor(a / w + 0.5) as i64).rem_euclid(ORIENTATION_BINS as i64);
                hist[b as usize] += h * h;
            }
        }
        hist
    }

    #[test]
    fn rotating_field_has_flat_orientation_histogram() {
        let n = 64;
        let c = (n as f64 - 1.0) / 2.0;
        let r = 30.0;
        let flow = FlowField::from_fn(n, n, |x, y| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            if dx * dx + dy * dy <= r * r {
                (-dy, dx)
            } else {
                (0.0, 0.0)
            }
        })
        .unwrap();
        let d = frame_descriptor(&flow);
        let mut hist = [0.0; ORIENTATION_BINS];
        for cy in 0..GRID {
            for cx in 0..GRID {
                for (b, slot) in hist.iter_mut().enumerate() {
                    *slot += d[feature_index(cx, cy, b, 0)];
                }
            }
        }
        let max = hist.iter().copied().fold(0.0, f64::max);
        let min = hist.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.5, "{hist:?}");

        let oracle = disc_orientation_oracle(r);
        let omax = oracle.iter().copied().fold(0.0, f64::max);
        let omin = oracle.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(omax / omin < 1.01);
    }

    #[test]
    fn quarter_turn_shifts_bins_by_four() {
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut field = vec![(0.0, 0.0); n * n];
        for f in field.iter_mut() {
            let k = rng.random_range(0..16) as f64;
            let m = rng.random_range(0.1..3.0);
            let a = k * PI / 8.0;
            *f = (m * libm::cos(a), m * libm::sin(a));
        }
        let flow = FlowField::from_fn(n, n, |x, y| field[y * n + x]).unwrap();
        // (x, y) → (n−1−y, x), vector (u, v) → (−v, u)
        let rotated = FlowField::from_fn(n, n, |xp, yp| {
            let (x, y) = (yp, n - 1 - xp);
            let (u, v) = field[y * n + x];
            (-v, u)
        })
        .unwrap();
        let a = frame_descriptor(&flow);
        let b = frame_descriptor(&rotated);
        for cy in 0..GRID {
            for cx in 0..GRID {
                for bin in 0..ORIENTATION_BINS {
                    for s in 0..STATS {
                        let src = a[feature_index(cx, cy, bin, s)];
                        let dst = b[feature_index(GRID - 1 - cy, cx, (bin + 4) % ORIENTATION_BINS, s)];
                        assert!((src - dst).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_frames(128, 64), (0..64).map(|i| 2 * i).collect::<Vec<_>>());
        assert_eq!(sample_frames(64, 64), (0..64).collect::<Vec<_>>());

        let idx = sample_frames(30, 64);
        assert_eq!(idx.len(), 64);
        let mut counts = [0usize; 30];
        for i in &idx {
            counts[*i] += 1;
        }
        // brute-force enumeration of ⌊i·30/64⌋
        let mut expected = [0usize; 30];
        for i in 0..64 {
            expected[i * 30 / 64] += 1;
        }
        assert_eq!(counts, expected);
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
    }

    proptest::proptest! {
        #[test]
        fn sampled_indices_are_monotone_and_in_range(prefix in 1usize..500, n in 1usize..130) {
            let idx = sample_frames(prefix, n);
            proptest::prop_assert_eq!(idx.len(), n);
            proptest::prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            proptest::prop_assert!(idx.iter().all(|&i| i < prefix));
        }
    }

    #[test]
    fn record_validation() {
        assert!(SampleRecord::new("s", "p", 0, 1.0, vec![0.0; 10]).is_err());
        assert!(SampleRecord::new("s", "p", 0, 0.0, vec![0.0; 512]).is_err());
        let r = SampleRecord::new("s", "p", 1, 2.0, vec![0.5; 1024]).unwrap();
        assert_eq!(r.frames(), 2);
        assert_eq!(r.sampled_features(3).shape(), &[3, 512]);
    }
}
