use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::tensor::Tensor;

/// Central finite differences of `f` at every coordinate of every input.
fn numeric_grads(inputs: &[Tensor], h: f64, f: &dyn Fn(&mut Tape, &[Value]) -> Value) -> Vec<Vec<f64>> {
    let eval = |ins: &[Tensor]| {
        let mut tape = Tape::new();
        let vs: Vec<Value> = ins.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vs);
        tape.scalar_value(out)
    };
    let mut grads = Vec::new();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            g[j] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

fn analytic_grads(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Value]) -> Value) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vs: Vec<Value> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vs);
    tape.backward(out).unwrap();
    vs.iter().map(|v| tape.grad_tensor(*v).into_data()).collect()
}

fn max_rel_err(a: &[Vec<f64>], n: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (ga, gn) in a.iter().zip(n) {
        for (x, y) in ga.iter().zip(gn) {
            let denom = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn check(inputs: &[Tensor], tol: f64, f: &dyn Fn(&mut Tape, &[Value]) -> Value) {
    let a = analytic_grads(inputs, f);
    let n = numeric_grads(inputs, 1e-5, f);
    let err = max_rel_err(&a, &n);
    assert!(err < tol, "relative gradient error {err:e} >= {tol:e}");
}

/// Weighted sum so that every output element gets a distinct adjoint.
fn probe(tape: &mut Tape, x: Value, seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(x).to_vec();
    let w = random_tensor(&mut rng, &shape);
    let wv = tape.leaf(w);
    let p = tape.mul(x, wv).unwrap();
    tape.sum(p)
}

#[test]
fn matmul_identity_and_hand_product() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let i = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let b = tape.leaf(Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap());
    let ai = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(ai).data(), &[1.0, 2.0, 3.0, 4.0]);
    let ab = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(ab).data(), &[19.0, 22.0, 43.0, 50.0]);
}

#[test]
fn matmul_shape_mismatch_reports_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]));
    let b = tape.leaf(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn matmul_sum_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ins = [random_tensor(&mut rng, &[3, 4]), random_tensor(&mut rng, &[4, 5])];
    check(&ins, 1e-6, &|t, v| {
        let c = t.matmul(v[0], v[1]).unwrap();
        t.sum(c)
    });
}

#[test]
fn matmul_nt_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ins = [random_tensor(&mut rng, &[3, 4]), random_tensor(&mut rng, &[5, 4])];
    check(&ins, 1e-5, &|t, v| {
        let c = t.matmul_nt(v[0], v[1]).unwrap();
        probe(t, c, 9)
    });
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, 0.5]);

    let x = tape.leaf(Tensor::vector(vec![0.0, libm::log(3.0)]));
    let y = tape.softmax(x).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] - 0.25).abs() < 1e-15 && (d[1] - 0.75).abs() < 1e-15);
}

#[test]
fn softmax_rejects_non_finite() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![0.0, f64::INFINITY]));
    assert!(matches!(tape.softmax(x), Err(Error::NonFinite(_))));
}

#[test]
fn softmax_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ins = [random_tensor(&mut rng, &[4, 6])];
    check(&ins, 1e-5, &|t, v| {
        let y = t.softmax(v[0]).unwrap();
        probe(t, y, 11)
    });
}

#[test]
fn layer_norm_examples() {
    let mut tape = Tape::new();
    let g = tape.leaf(Tensor::filled(&[2], 1.0));
    let b = tape.leaf(Tensor::zeros(&[2]));
    let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap());
    let y = tape.layer_norm(x, g, b, 0.0).unwrap();
    assert_eq!(tape.value(y).data(), &[-1.0, 1.0]);

    let g = tape.leaf(Tensor::filled(&[4], 1.0));
    let b = tape.leaf(Tensor::zeros(&[4]));
    let x = tape.leaf(Tensor::matrix(1, 4, vec![2.5; 4]).unwrap());
    let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
    assert!(tape.value(y).data().iter().all(|v| *v == 0.0));
}

#[test]
fn layer_norm_rejects_single_feature() {
    let mut tape = Tape::new();
    let g = tape.leaf(Tensor::filled(&[1], 1.0));
    let b = tape.leaf(Tensor::zeros(&[1]));
    let x = tape.leaf(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
    assert!(tape.layer_norm(x, g, b, 1e-5).is_err());
}

#[test]
fn layer_norm_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ins = [
        random_tensor(&mut rng, &[3, 5]),
        random_tensor(&mut rng, &[5]),
        random_tensor(&mut rng, &[5]),
    ];
    check(&ins, 1e-5, &|t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap();
        probe(t, y, 12)
    });
}

/// erf by composite Simpson quadrature of `2/√π ∫₀ˣ e^{−t²} dt`,
/// independent of the libm implementation used by the tape.
fn erf_quadrature(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let f = |t: f64| libm::exp(-t * t);
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 * 2.0 / core::f64::consts::PI.sqrt()
}

#[test]
fn gelu_examples() {
    assert_eq!(gelu(0.0), 0.0);
    let oracle = 3.0 * 0.5 * (1.0 + erf_quadrature(3.0 / core::f64::consts::SQRT_2));
    assert!((gelu(3.0) - oracle).abs() < 1e-12, "{} vs {}", gelu(3.0), oracle);
    assert!((oracle - 2.99595).abs() < 1e-5);
    assert!(gelu(-10.0).abs() < 1e-8);
}

#[test]
fn gelu_gradient_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ins = [random_tensor(&mut rng, &[2, 7])];
    check(&ins, 1e-5, &|t, v| {
        let y = t.gelu(v[0]);
        probe(t, y, 13)
    });
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let z = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
    let l = tape.cross_entropy(z, 0, 1.0).unwrap();
    assert!((tape.scalar_value(l) - core::f64::consts::LN_2).abs() < 1e-15);
    let z = tape.leaf(Tensor::vector(vec![20.0, 0.0]));
    let l = tape.cross_entropy(z, 0, 1.0).unwrap();
    assert!(tape.scalar_value(l) < 1e-8);
    assert!(matches!(
        tape.cross_entropy(z, 2, 1.0),
        Err(Error::LabelOutOfRange { label: 2, classes: 2 })
    ));
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let logits = vec![0.3, -1.2, 2.0];
    let mut tape = Tape::new();
    let z = tape.leaf(Tensor::vector(logits.clone()));
    let l = tape.cross_entropy(z, 1, 1.0).unwrap();
    tape.backward(l).unwrap();
    let g = tape.grad(z).unwrap().to_vec();
    let p = softmax_with_temperature(&logits, 1.0);
    for j in 0..3 {
        let expected = p[j] - if j == 1 { 1.0 } else { 0.0 };
        assert!((g[j] - expected).abs() < 1e-10);
    }
    let n = numeric_grads(&[Tensor::vector(logits)], 1e-5, &|t, v| t.cross_entropy(v[0], 1, 1.0).unwrap());
    for j in 0..3 {
        assert!((g[j] - n[0][j]).abs() < 1e-9);
    }
}

#[test]
fn kl_and_mse_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let target = softmax_with_temperature(&[0.4, -0.3, 1.1], 2.0);
    let ins = [random_tensor(&mut rng, &[3])];
    check(&ins, 1e-5, &|t, v| t.kl_to_target(v[0], &target, 2.0).unwrap());

    let tgt = random_tensor(&mut rng, &[4, 3]);
    let ins = [random_tensor(&mut rng, &[4, 3])];
    check(&ins, 1e-6, &|t, v| t.mse_to_target(v[0], &tgt).unwrap());
}

#[test]
fn slicing_and_concat_gradients_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ins = [random_tensor(&mut rng, &[4, 6]), random_tensor(&mut rng, &[1, 6]), random_tensor(&mut rng, &[6])];
    check(&ins, 1e-6, &|t, v| {
        let a = t.slice_cols(v[0], 1, 3).unwrap();
        let b = t.slice_cols(v[0], 4, 2).unwrap();
        let c = t.concat_cols(&[b, a]).unwrap();
        let d = t.concat_rows(&[v[0], v[1]]).unwrap();
        let e = t.rows(d, 2, 3).unwrap();
        let f = t.add_row(e, v[2]).unwrap();
        let f = t.scale(f, -0.7);
        let s1 = probe(t, c, 21);
        let s2 = probe(t, f, 22);
        let r = t.reshape(v[1], &[6]).unwrap();
        let s3 = probe(t, r, 23);
        let s = t.add(s1, s2).unwrap();
        t.add(s, s3).unwrap()
    });
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
    let s = tape.sum(a);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[6.0]);

    let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    assert!(tape.backward(v).is_err());
}

#[test]
fn shared_subexpression_matches_expanded_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_tensor(&mut rng, &[3, 3]);
    let w = random_tensor(&mut rng, &[3, 3]);

    // shared: h = x·w reused twice
    let mut t1 = Tape::new();
    let (x1, w1) = (t1.leaf(x.clone()), t1.leaf(w.clone()));
    let h = t1.matmul(x1, w1).unwrap();
    let g = t1.gelu(h);
    let s = t1.add(h, g).unwrap();
    let r1 = probe(&mut t1, s, 3);
    t1.backward(r1).unwrap();

    // expanded: x·w computed twice
    let mut t2 = Tape::new();
    let (x2, w2) = (t2.leaf(x), t2.leaf(w));
    let ha = t2.matmul(x2, w2).unwrap();
    let hb = t2.matmul(x2, w2).unwrap();
    let g = t2.gelu(hb);
    let s = t2.add(ha, g).unwrap();
    let r2 = probe(&mut t2, s, 3);
    t2.backward(r2).unwrap();

    for (a, b) in t1.grad(x1).unwrap().iter().zip(t2.grad(x2).unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in t1.grad(w1).unwrap().iter().zip(t2.grad(w2).unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn repeated_passes_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ins = [random_tensor(&mut rng, &[4, 5]), random_tensor(&mut rng, &[5, 3])];
    let f = |t: &mut Tape, v: &[Value]| {
        let c = t.matmul(v[0], v[1]).unwrap();
        let s = t.softmax(c).unwrap();
        probe(t, s, 4)
    };
    let a = analytic_grads(&ins, &f);
    let b = analytic_grads(&ins, &f);
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        xs in proptest::collection::vec(-30.0f64..30.0, 1..12),
        c in -50.0f64..50.0,
    ) {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(xs.clone()));
        let y = tape.softmax(x).unwrap();
        let shifted = tape.leaf(Tensor::vector(xs.iter().map(|v| v + c).collect()));
        let ys = tape.softmax(shifted).unwrap();
        let p = tape.value(y).data();
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (a, b) in p.iter().zip(tape.value(ys).data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn primitive_gradients_match_fd_on_random_inputs(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ins = [random_tensor(&mut rng, &[3, 4]), random_tensor(&mut rng, &[4]), random_tensor(&mut rng, &[4])];
        let f = |t: &mut Tape, v: &[Value]| {
            let n = t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap();
            let g = t.gelu(n);
            let s = t.softmax(g).unwrap();
            probe(t, s, 31)
        };
        let a = analytic_grads(&ins, &f);
        let n = numeric_grads(&ins, 1e-5, &f);
        prop_assert!(max_rel_err(&a, &n) < 1e-5);
    }
}

#[test]
fn kl_stays_nonnegative_for_saturated_distributions() {
    // both nearly one-hot on the same class: the true divergence is far
    // below one ulp of the dominant probability
    let student = [40.0, -10.0, 3.0];
    for teacher in [[41.0, -12.0, 2.0], [39.5, -9.0, 4.0], [40.0, -10.0, 3.0]] {
        let target = softmax_with_temperature(&teacher, 1.0);
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::vector(student.to_vec()));
        let kl = tape.kl_to_target(s, &target, 1.0).unwrap();
        assert!(tape.scalar_value(kl) >= 0.0, "{teacher:?}: {}", tape.scalar_value(kl));
    }
}

proptest! {
    #[test]
    fn kl_matches_direct_sum_when_well_conditioned(
        zs in proptest::collection::vec(-3.0f64..3.0, 3),
        zt in proptest::collection::vec(-3.0f64..3.0, 3),
        tau in 0.5f64..10.0,
    ) {
        let t = softmax_with_temperature(&zt, tau);
        let q = softmax_with_temperature(&zs, tau);
        let direct: f64 = t.iter().zip(&q).map(|(a, b)| a * (a.ln() - b.ln())).sum::<f64>() * tau * tau;
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::vector(zs.clone()));
        let kl = tape.kl_to_target(s, &t, tau).unwrap();
        prop_assert!((tape.scalar_value(kl) - direct).abs() < 1e-12 * (1.0 + tau * tau));
        prop_assert!(tape.scalar_value(kl) >= 0.0);
    }
}
