//! AdamW: Adam with decoupled weight decay.
//!
//! `p ← p·(1 − lr·wd)` is applied first, then the bias-corrected Adam
//! update `p ← p − lr·m̂/(√v̂ + ε)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Optimizer state: step count plus first and second moments per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(config: AdamWConfig, params: &[&Tensor]) -> Self {
        OptState {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.second[i]
    }
}

/// One AdamW update. Rejects non-finite gradients without touching the
/// parameters or the state.
pub fn adamw_step(params: &mut [&mut Tensor], grads: &[&[f64]], state: &mut OptState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "adamw: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.first[i].len() != p.len() {
            return Err(Error::ShapeMismatch {
                op: "adamw",
                left: p.shape().to_vec(),
                right: vec![g.len()],
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adamw gradients"));
        }
    }

    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
    let decay = 1.0 - c.lr * c.weight_decay;

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *w *= decay;
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= c.lr * mhat / (libm::sqrt(vhat) + c.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(p0: f64, g: f64, cfg: AdamWConfig) -> (f64, OptState) {
        let mut p = Tensor::scalar(p0);
        let mut st = OptState::new(cfg, &[&p]);
        adamw_step(&mut [&mut p], &[&[g]], &mut st).unwrap();
        (p.data()[0], st)
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let (p, st) = run(0.37, 0.0, cfg);
        assert_eq!(p, 0.37);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn decay_only() {
        let cfg = AdamWConfig {
            lr: 1e-3,
            weight_decay: 1e-4,
            ..Default::default()
        };
        let (p, _) = run(2.0, 0.0, cfg);
        assert!((p - 2.0 * (1.0 - 1e-7)).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let (p, _) = run(1.0, 1.0, cfg);
        assert!(((1.0 - p) - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn non_finite_grad_leaves_state_alone() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut st = OptState::new(AdamWConfig::default(), &[&p]);
        let before = st.clone();
        let err = adamw_step(&mut [&mut p], &[&[0.5, f64::NAN]], &mut st);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(st, before);
        assert_eq!(p.data(), &[1.0, 2.0]);
    }

    #[test]
    fn step_count_increments_by_one() {
        let mut p = Tensor::vector(vec![1.0; 3]);
        let mut st = OptState::new(AdamWConfig::default(), &[&p]);
        for k in 1..=5 {
            adamw_step(&mut [&mut p], &[&[0.1, -0.2, 0.3]], &mut st).unwrap();
            assert_eq!(st.step_count(), k);
        }
    }

    #[test]
    fn zero_lr_keeps_params() {
        let cfg = AdamWConfig {
            lr: 0.0,
            ..Default::default()
        };
        let (p, _) = run(-0.8, 3.0, cfg);
        assert_eq!(p, -0.8);
    }
}
