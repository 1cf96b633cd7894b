//! Adam and the warmup/decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every trainable tensor, plus the step
/// count used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: EncoderParams,
    pub v: EncoderParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of a flat slice. `step` is the 1-based
/// index of this update.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Applies one Adam step to every trainable tensor. Nothing is modified if
/// any gradient is non-finite.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.m)?;
    for (name, g) in grads.tensors() {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("gradient of {name}"),
            });
        }
    }
    state.step += 1;
    let step = state.step;
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        adam_update(
            p.as_mut_slice(),
            g.as_slice(),
            m.as_mut_slice(),
            v.as_mut_slice(),
            step,
            lr,
            cfg,
        );
    }
    Ok(())
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut EncoderParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Linear warmup from 0 to `peak` over `warmup` iterations, then linear
/// decay to `floor` at `total`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_iters: u64,
    pub total_iters: u64,
    pub peak_lr: f64,
    pub floor_lr: f64,
}

impl LrSchedule {
    pub fn new(warmup_iters: u64, total_iters: u64, peak_lr: f64, floor_lr: f64) -> Result<Self> {
        if total_iters <= warmup_iters {
            return Err(Error::Config(format!(
                "total iterations {total_iters} must exceed warmup iterations {warmup_iters}; \
                 shrink warmup_iters"
            )));
        }
        if !(peak_lr > 0.0 && floor_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        Ok(Self {
            warmup_iters,
            total_iters,
            peak_lr,
            floor_lr,
        })
    }

    pub fn at(&self, iter: u64) -> f64 {
        if iter <= self.warmup_iters {
            if self.warmup_iters == 0 {
                return self.peak_lr;
            }
            return self.peak_lr * iter as f64 / self.warmup_iters as f64;
        }
        if iter >= self.total_iters {
            return self.floor_lr;
        }
        let frac = (iter - self.warmup_iters) as f64 / (self.total_iters - self.warmup_iters) as f64;
        self.peak_lr + (self.floor_lr - self.peak_lr) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = LrSchedule::new(8000, 100_000, 3e-5, 3e-7).unwrap();
        assert!((s.at(4000) - 1.5e-5).abs() < 1e-20);
        assert_eq!(s.at(8000), 3e-5);
        assert_eq!(s.at(100_000), 3e-7);
        assert_eq!(s.at(200_000), 3e-7);
        assert_eq!(s.at(0), 0.0);
        let mid = s.at(54_000);
        assert!((mid - (3e-5 + 3e-7) / 2.0).abs() < 1e-18);
        assert!(LrSchedule::new(8000, 8000, 3e-5, 3e-7).is_err());
    }

    #[test]
    fn schedule_is_bounded_and_continuous() {
        let s = LrSchedule::new(100, 1000, 3e-5, 3e-7).unwrap();
        let lrs: Vec<f64> = (0..1200).map(|i| s.at(i)).collect();
        let max = lrs.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 3e-5);
        assert!(lrs[1..].iter().all(|&l| l >= 3e-7));
        for w in lrs.windows(2) {
            assert!((w[1] - w[0]).abs() <= 3e-5 / 100.0 + 1e-18);
        }
    }

    #[test]
    fn first_adam_step_is_lr() {
        let mut p = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, 0.1, &AdamConfig::default());
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = [0.3, -1.2];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        for step in 1..5 {
            adam_update(&mut p, &[0.0; 2], &mut m, &mut v, step, 0.1, &AdamConfig::default());
        }
        assert_eq!(p, [0.3, -1.2]);
    }
}
