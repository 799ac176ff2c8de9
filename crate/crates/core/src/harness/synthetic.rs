//! Seeded synthetic cohorts standing in for clinical recordings.
//!
//! Every patient contributes samples of both classes that share a
//! patient-specific background motion. The class signal follows a motion
//! archetype whose amplitude ramps up over the sample, so short prefixes
//! are harder to classify than full samples.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{extract_spatial_features, SampleRecord, FEATURE_DIM};
use crate::flow::FlowField;

/// Motion pattern of one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionArchetype {
    /// Per-sample amplitude drawn uniformly from this range.
    pub amplitude: (f64, f64),
    /// Relative depth of the rhythmic modulation.
    pub burst_gain: f64,
    /// Rhythm frequency in cycles per frame.
    pub burst_freq: f64,
    /// Exponent of the ramp `((t+1)/F)^p`; zero gives a constant envelope.
    pub ramp_power: f64,
}

impl MotionArchetype {
    /// Low-amplitude drift that builds up linearly.
    pub fn drift() -> Self {
        MotionArchetype {
            amplitude: (0.4, 0.7),
            burst_gain: 0.0,
            burst_freq: 0.0,
            ramp_power: 1.0,
        }
    }

    /// High-amplitude rhythmic bursts that build up over the sample.
    pub fn bursts() -> Self {
        MotionArchetype {
            amplitude: (0.8, 1.2),
            burst_gain: 0.6,
            burst_freq: 0.15,
            ramp_power: 2.0,
        }
    }

    /// Envelope at frame `t` of `frames`, including the rhythm.
    pub fn envelope(&self, amplitude: f64, t: usize, frames: usize, phase: f64) -> f64 {
        let ramp = libm::pow((t + 1) as f64 / frames as f64, self.ramp_power);
        let rhythm = 1.0 + self.burst_gain * libm::sin(core::f64::consts::TAU * self.burst_freq * t as f64 + phase);
        amplitude * ramp * rhythm
    }
}

/// What the generator emits per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// 512-value feature vectors synthesized directly.
    Features,
    /// Flow fields of the given size, passed through the featurizer.
    Flow { width: usize, height: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub patients: usize,
    /// Samples per patient; labels alternate starting with class 0.
    pub samples_per_patient: usize,
    /// Inclusive range of frames per sample.
    pub frames: (usize, usize),
    pub frames_per_second: f64,
    /// Archetype of class 0 (normal) and class 1 (TCS).
    pub archetypes: [MotionArchetype; 2],
    /// Scale of the patient background motion.
    pub background: f64,
    /// Noise level; per-element standard deviation is `noise/√512`.
    pub noise: f64,
    pub representation: Representation,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            patients: 40,
            samples_per_patient: 2,
            frames: (52, 160),
            frames_per_second: 1.0,
            archetypes: [MotionArchetype::drift(), MotionArchetype::bursts()],
            background: 1.0,
            noise: 0.1,
            representation: Representation::Features,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patients == 0 || self.samples_per_patient == 0 {
            return Err(Error::InvalidConfig("patients and samples-per-patient must be positive".into()));
        }
        if self.frames.0 == 0 || self.frames.0 > self.frames.1 {
            return Err(Error::InvalidConfig("frame range must be non-empty and positive".into()));
        }
        if !(self.frames_per_second > 0.0) || !(self.noise >= 0.0) || !(self.background >= 0.0) {
            return Err(Error::InvalidConfig("fps must be positive, noise and background non-negative".into()));
        }
        for a in &self.archetypes {
            if !(a.amplitude.0 >= 0.0 && a.amplitude.0 <= a.amplitude.1) || !(a.ramp_power >= 0.0) {
                return Err(Error::InvalidConfig("archetype amplitude range or ramp is invalid".into()));
            }
        }
        if self.archetypes[0] == self.archetypes[1] {
            return Err(Error::InvalidConfig("class archetypes must differ".into()));
        }
        if let Representation::Flow { width, height } = self.representation {
            if width < 4 || height < 4 {
                return Err(Error::InvalidConfig("flow frames must be at least 4×4".into()));
            }
        }
        Ok(())
    }
}

fn unit_nonnegative(rng: &mut ChaCha8Rng, sparsity: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..FEATURE_DIM)
        .map(|_| if rng.random::<f64>() < sparsity { rng.random::<f64>() } else { 0.0 })
        .collect();
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(f64::MIN_POSITIVE);
    for x in &mut v {
        *x /= norm;
    }
    v
}

struct SampleDraw {
    frames: usize,
    amplitude: f64,
    phase: f64,
}

fn draw(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, class: usize) -> SampleDraw {
    let a = spec.archetypes[class].amplitude;
    SampleDraw {
        frames: rng.random_range(spec.frames.0..=spec.frames.1),
        amplitude: if a.1 > a.0 { rng.random_range(a.0..=a.1) } else { a.0 },
        phase: rng.random_range(0.0..core::f64::consts::TAU),
    }
}

/// Synthesizes a cohort; the seed fully determines the output.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<Vec<SampleRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let patterns = [unit_nonnegative(&mut rng, 0.25), unit_nonnegative(&mut rng, 0.25)];
    let sigma = spec.noise / libm::sqrt(FEATURE_DIM as f64);
    let mut out = Vec::with_capacity(spec.patients * spec.samples_per_patient);
    for p in 0..spec.patients {
        let patient = format!("p{p:03}");
        let background = unit_nonnegative(&mut rng, 0.5);
        let drift_dir = rng.random_range(0.0..core::f64::consts::TAU);
        for s in 0..spec.samples_per_patient {
            let label = s % 2;
            let arch = spec.archetypes[label];
            let d = draw(&mut rng, spec, label);
            let features: Vec<f32> = match spec.representation {
                Representation::Features => {
                    let mut f = Vec::with_capacity(d.frames * FEATURE_DIM);
                    for t in 0..d.frames {
                        let e = arch.envelope(d.amplitude, t, d.frames, d.phase);
                        for i in 0..FEATURE_DIM {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            let x = spec.background * background[i] + e * patterns[label][i] + sigma * z;
                            f.push(x as f32);
                        }
                    }
                    f
                }
                Representation::Flow { width, height } => {
                    let flows = flow_frames(spec, label, &d, drift_dir, width, height, &mut rng)?;
                    extract_spatial_features(&flows)?
                        .into_iter()
                        .flatten()
                        .map(|v| v as f32)
                        .collect()
                }
            };
            let duration = d.frames as f64 / spec.frames_per_second;
            out.push(SampleRecord::new(format!("{patient}-s{s}"), patient.clone(), label, duration, features)?);
        }
    }
    Ok(out)
}

/// Flow fields of one synthetic sample: a uniform patient drift plus a
/// class-specific motion inside a central limb region. Class 0 moves the
/// region steadily along the drift direction; class 1 jerks it back and
/// forth perpendicular to it.
fn flow_frames(
    spec: &SyntheticSpec,
    label: usize,
    d: &SampleDraw,
    drift_dir: f64,
    width: usize,
    height: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FlowField>> {
    let arch = spec.archetypes[label];
    let (dc, ds) = (libm::cos(drift_dir), libm::sin(drift_dir));
    let mut flows = Vec::with_capacity(d.frames);
    for t in 0..d.frames {
        let e = arch.envelope(d.amplitude, t, d.frames, d.phase);
        let (eu, ev) = if label == 0 {
            (e * dc, e * ds)
        } else {
            let sign = if libm::sin(core::f64::consts::TAU * arch.burst_freq * t as f64 + d.phase) >= 0.0 {
                1.0
            } else {
                -1.0
            };
            (-sign * e * ds, sign * e * dc)
        };
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let inside = x >= width / 4 && x < 3 * width / 4 && y >= height / 4 && y < 3 * height / 4;
                let (mut a, mut b) = (0.1 * spec.background * dc, 0.1 * spec.background * ds);
                if inside {
                    a += eu;
                    b += ev;
                }
                let zu: f64 = StandardNormal.sample(rng);
                let zv: f64 = StandardNormal.sample(rng);
                u.push(a + spec.noise * zu);
                v.push(b + spec.noise * zv);
            }
        }
        flows.push(FlowField::new(width, height, u, v)?);
    }
    Ok(flows)
}

/// Flow fields of a single sample of class `label`, drawn from `seed`.
pub fn synthetic_flow_sequence(
    spec: &SyntheticSpec,
    label: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Vec<FlowField>> {
    spec.validate()?;
    if label > 1 {
        return Err(Error::LabelOutOfRange { label, classes: 2 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draw(&mut rng, spec, label);
    let dir = rng.random_range(0.0..core::f64::consts::TAU);
    flow_frames(spec, label, &d, dir, width, height, &mut rng)
}
