//! Adam with gradient-norm clipping and an exponential moving average of the
//! weights.

use alloc::vec::Vec;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clip the gradient to this 2-norm; `None` disables clipping.
    pub clip: Option<f64>,
    pub ema_decay: f64,
    /// Use `min(ema_decay, (1 + k)/(10 + k))` at update `k`, so short runs
    /// do not keep a large share of the initial weights.
    pub ema_warmup: bool,
}

impl AdamConfig {
    pub fn new(lr: f64, clip: Option<f64>) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip, ema_decay: 0.999, ema_warmup: false }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    ema: Vec<f64>,
    step: u64,
}

/// Scales `grad` in place so its 2-norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

impl Optimizer {
    /// Fresh state for `params`; the EMA shadow starts at `params`.
    pub fn new(cfg: AdamConfig, params: &[f64]) -> Self {
        let n = params.len();
        Self { cfg, m: alloc::vec![0.0; n], v: alloc::vec![0.0; n], ema: params.to_vec(), step: 0 }
    }

    /// Restores a saved state.
    pub fn from_state(cfg: AdamConfig, m: Vec<f64>, v: Vec<f64>, ema: Vec<f64>, step: u64) -> Result<Self> {
        check_dim(ema.len(), m.len())?;
        check_dim(ema.len(), v.len())?;
        Ok(Self { cfg, m, v, ema, step })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn ema(&self) -> &[f64] {
        &self.ema
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One update of `params` from `grad` computed at loss value `loss`.
    /// Non-finite losses or gradients abort without touching the parameters.
    pub fn apply(&mut self, params: &mut [f64], grad: &mut [f64], loss: f64) -> Result<()> {
        check_dim(self.m.len(), params.len())?;
        check_dim(self.m.len(), grad.len())?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step: self.step, loss });
        }
        if let Some(c) = self.cfg.clip {
            clip_grad_norm(grad, c);
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, mut ema_decay, ema_warmup, .. } = self.cfg;
        if ema_warmup {
            let k = self.step as f64;
            ema_decay = ema_decay.min(k / (9.0 + k));
        }
        let bc1 = 1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
            self.ema[i] = ema_decay * self.ema[i] + (1.0 - ema_decay) * params[i];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Optimizer::new(AdamConfig::new(0.0, None), &p);
        opt.apply(&mut p, &mut vec![0.3, 0.4], 1.0).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn ema_after_one_step() {
        let theta0 = vec![1.0, 2.0];
        let mut p = theta0.clone();
        let mut opt = Optimizer::new(AdamConfig::new(0.1, None), &p);
        opt.apply(&mut p, &mut vec![1.0, -1.0], 0.5).unwrap();
        for i in 0..2 {
            assert_relative_eq!(opt.ema()[i], 0.999 * theta0[i] + 0.001 * p[i], max_relative = 1e-15);
        }
        // First Adam step moves each coordinate by lr against the gradient sign.
        assert_relative_eq!(p[0], 0.9, max_relative = 1e-6);
        assert_relative_eq!(p[1], 2.1, max_relative = 1e-6);
    }

    #[test]
    fn ema_warmup_tracks_early_weights() {
        let mut p = vec![1.0];
        let cfg = AdamConfig { ema_warmup: true, ..AdamConfig::new(0.1, None) };
        let mut opt = Optimizer::new(cfg, &p);
        opt.apply(&mut p, &mut vec![1.0], 0.5).unwrap();
        // Decay 1/10 at the first update.
        assert_relative_eq!(opt.ema()[0], 0.1 * 1.0 + 0.9 * p[0], max_relative = 1e-15);
    }

    #[test]
    fn clipping_only_above_threshold() {
        let mut g = vec![6.0, 8.0];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 10.0);
        assert_eq!(g, vec![6.0, 8.0]);
        let mut g = vec![60.0, 80.0];
        clip_grad_norm(&mut g, 10.0);
        assert_relative_eq!(g[0], 6.0, max_relative = 1e-14);
        assert_relative_eq!(g[1], 8.0, max_relative = 1e-14);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut p = vec![1.0];
        let mut opt = Optimizer::new(AdamConfig::new(0.1, None), &p);
        let err = opt.apply(&mut p, &mut vec![1.0], f64::NAN).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 0, .. }));
        assert_eq!(p, vec![1.0]);
    }
}
