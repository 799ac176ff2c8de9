use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::distill::DistillConfig;
use crate::features::{SampleRecord, FEATURE_DIM};
use crate::model::SetrConfig;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        patients: 6,
        frames: (16, 24),
        seed,
        ..Default::default()
    }
}

#[test]
fn same_seed_same_dataset() {
    let a = generate_synthetic_dataset(&small_spec(4)).unwrap();
    let b = generate_synthetic_dataset(&small_spec(4)).unwrap();
    let c = generate_synthetic_dataset(&small_spec(5)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 12);
    assert_eq!(a.iter().filter(|r| r.label == 1).count(), 6);
    for r in &a {
        assert!((16..=24).contains(&r.frames()));
        assert_eq!(r.duration, r.frames() as f64);
    }
}

fn mean_magnitude(r: &SampleRecord) -> f64 {
    r.features().iter().map(|v| v.abs() as f64).sum::<f64>() / r.features().len() as f64
}

#[test]
fn disjoint_amplitudes_without_noise_are_threshold_separable() {
    let arch = |lo, hi| MotionArchetype {
        amplitude: (lo, hi),
        burst_gain: 0.0,
        burst_freq: 0.0,
        ramp_power: 1.0,
    };
    let spec = SyntheticSpec {
        patients: 20,
        archetypes: [arch(0.1, 0.2), arch(1.0, 2.0)],
        background: 0.0,
        noise: 0.0,
        ..small_spec(7)
    };
    let data = generate_synthetic_dataset(&spec).unwrap();
    let max0 = data.iter().filter(|r| r.label == 0).map(mean_magnitude).fold(0.0, f64::max);
    let min1 = data.iter().filter(|r| r.label == 1).map(mean_magnitude).fold(f64::MAX, f64::min);
    assert!(max0 < min1, "{max0} vs {min1}");
}

fn class_mean(data: &[SampleRecord], label: usize, window: impl Fn(usize) -> core::ops::Range<usize>) -> Vec<f64> {
    let mut acc = vec![0.0; FEATURE_DIM];
    let mut n = 0.0;
    for r in data.iter().filter(|r| r.label == label) {
        for t in window(r.frames()) {
            for (a, v) in acc.iter_mut().zip(r.frame(t)) {
                *a += *v as f64;
            }
            n += 1.0;
        }
    }
    acc.iter().map(|a| a / n).collect()
}

#[test]
fn class_signal_ramps_over_the_sample() {
    let data = generate_synthetic_dataset(&SyntheticSpec {
        patients: 20,
        ..small_spec(8)
    })
    .unwrap();
    let dist = |w: &dyn Fn(usize) -> core::ops::Range<usize>| {
        let a = class_mean(&data, 0, w);
        let b = class_mean(&data, 1, w);
        libm::sqrt(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
    };
    let early = dist(&|f| 0..f / 8);
    let late = dist(&|f| f - f / 8..f);
    assert!(early < late, "{early} vs {late}");

    // envelope oracle: the first eighth of a linear ramp averages ≈1/16 of full scale
    let arch = MotionArchetype::drift();
    let f = 160;
    let mean: f64 = (0..f / 8).map(|t| arch.envelope(1.0, t, f, 0.0)).sum::<f64>() / (f / 8) as f64;
    assert!((mean - 1.0 / 16.0).abs() < 0.01);
}

#[test]
fn flow_representation_goes_through_the_featurizer() {
    let spec = SyntheticSpec {
        patients: 2,
        frames: (6, 8),
        representation: Representation::Flow { width: 16, height: 16 },
        ..small_spec(1)
    };
    let data = generate_synthetic_dataset(&spec).unwrap();
    for r in &data {
        for t in 0..r.frames() {
            let n: f64 = r.frame(t).iter().map(|v| (*v as f64) * (*v as f64)).sum();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }
    let flows = synthetic_flow_sequence(&spec, 1, 16, 16, 3).unwrap();
    assert!((6..=8).contains(&flows.len()));
    assert!(synthetic_flow_sequence(&spec, 2, 16, 16, 3).is_err());
}

#[test]
fn invalid_specs_are_rejected() {
    let same = SyntheticSpec {
        archetypes: [MotionArchetype::drift(), MotionArchetype::drift()],
        ..Default::default()
    };
    assert!(generate_synthetic_dataset(&same).is_err());
    let frames = SyntheticSpec {
        frames: (10, 5),
        ..Default::default()
    };
    assert!(generate_synthetic_dataset(&frames).is_err());
}

#[test]
fn fractions_parse_and_map_to_levels() {
    let f: Fraction = "3/4".parse().unwrap();
    assert_eq!(f.level(8).unwrap().level, 5);
    assert_eq!(f.level(4).unwrap().level, 2);
    assert!(f.level(2).is_err());
    assert_eq!("full".parse::<Fraction>().unwrap().level(8).unwrap().level, 7);
    assert!("0/4".parse::<Fraction>().is_err());
    assert!("5/4".parse::<Fraction>().is_err());
    assert!("x".parse::<Fraction>().is_err());
    assert_eq!(alloc::format!("{}", Fraction::new(1, 8).unwrap()), "1/8");
    assert_eq!(Fraction::quarters().len(), 4);
}

fn tiny_model() -> SetrConfig {
    SetrConfig {
        tokens: 4,
        hidden: 8,
        heads: 2,
        layers: 1,
        mlp_hidden: 16,
        dropout: 0.0,
        classes: 2,
        feature_dim: FEATURE_DIM,
        literal_attention: false,
    }
}

#[test]
fn evaluate_rejects_unrepresentable_fractions() {
    let data = generate_synthetic_dataset(&small_spec(2)).unwrap();
    let refs: Vec<&SampleRecord> = data.iter().collect();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let params = crate::model::SetrParams::init(&tiny_model(), &mut rng);
    let ok = evaluate(&params, &tiny_model(), &refs, 4, &Fraction::quarters()).unwrap();
    assert_eq!(ok.len(), 4);
    for (_, m) in &ok {
        assert_eq!(m.confusion.total(), data.len());
    }
    assert!(evaluate(&params, &tiny_model(), &refs, 4, &[Fraction::new(1, 3).unwrap()]).is_err());
}

#[test]
fn fold_run_isolates_test_patients_and_counts_rows() {
    let data = generate_synthetic_dataset(&SyntheticSpec {
        patients: 10,
        ..small_spec(3)
    })
    .unwrap();
    let plan = kfold_split(&data, 5, true, 1).unwrap();
    let cfg = DistillConfig {
        epochs: 2,
        batch_size: 4,
        ..Default::default()
    };
    let arms = [Arm::Plain, Arm::Pkd, Arm::Direct];
    let out = run_fold(&data, &plan, 2, &arms, 4, &Fraction::quarters(), &tiny_model(), &cfg, 0.125, 9).unwrap();
    assert_eq!(out.arms.len(), 3);
    assert_eq!(out.test_ids.len(), 4);
    assert!(!out.val_ids.is_empty());
    assert!(out.train_ids.is_disjoint(&out.test_ids) && out.val_ids.is_disjoint(&out.test_ids));
    for a in &out.arms {
        assert_eq!(a.metrics.len(), 4);
        for s in a.stages.values() {
            assert!(s.seen_ids.is_disjoint(&out.test_ids));
        }
    }
    let plain = &out.arms[0];
    let pkd = &out.arms[1];
    let direct = &out.arms[2];
    assert_eq!(plain.stages[&3], pkd.stages[&3]);
    assert_eq!(pkd.stages[&3], direct.stages[&3]);
    assert_eq!(pkd.stages.len(), 4);
    assert_eq!(direct.stages[&2], pkd.stages[&2]);
    assert_ne!(direct.stages[&0].model, pkd.stages[&0].model);
    // plain and distilled arms agree at the full fraction
    assert_eq!(plain.metrics[3], pkd.metrics[3]);

    let again = run_fold(&data, &plan, 2, &arms, 4, &Fraction::quarters(), &tiny_model(), &cfg, 0.125, 9).unwrap();
    assert_eq!(out, again);
    assert!(run_fold(&data, &plan, 5, &arms, 4, &Fraction::quarters(), &tiny_model(), &cfg, 0.125, 9).is_err());
}
