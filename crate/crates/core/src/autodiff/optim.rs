use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use super::real::Real;
use super::tape::Gradients;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based) over flat slices.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "adam step counter starts at 1");
    assert!(params.len() == grads.len() && m.len() == grads.len() && v.len() == grads.len());
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let one = T::one();
    let c1 = T::of(1.0 - cfg.beta1.powf(t as f64));
    let c2 = T::of(1.0 - cfg.beta2.powf(t as f64));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

/// Adam state for a whole [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one step. Parameters without a gradient are left untouched;
    /// a non-finite gradient aborts before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for id in store.ids() {
            if let Some(g) = grads.param(id) {
                if !g.all_finite() {
                    return Err(Error::NonFinite { op: "adam" });
                }
            }
        }
        self.t += 1;
        for id in store.ids() {
            let Some(g) = grads.param(id) else { continue };
            let p = store.get_mut(id);
            adam_step(
                p.data_mut(),
                g.data(),
                self.m[id.0].data_mut(),
                self.v[id.0].data_mut(),
                &self.config,
                self.t,
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [0.3f64, -1.2];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_step(&mut p, &[0.0, 0.0], &mut m, &mut v, &AdamConfig::default(), 1);
        assert_eq!(p, [0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut p = [0.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_step(&mut p, &[1.0], &mut m, &mut v, &cfg, 1);
        // m̂ = v̂ = 1, so the step is lr / (1 + eps).
        assert!((p[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }
}
