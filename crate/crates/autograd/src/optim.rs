//! Decoupled-weight-decay Adam, global-norm clipping and a step LR schedule.

use std::collections::BTreeMap;

use crate::graph::Gradients;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter in `store` that has a gradient.
    /// Parameters without a gradient are left untouched, weight decay included.
    pub fn step(&mut self, store: &ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, param) in store.entries() {
            let Some(g) = grads.get(&param.var()) else { continue };
            let (m, v) = self
                .moments
                .entry(name)
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let mut p = param.value();
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i];
                pd[i] *= 1.0 - lr * weight_decay;
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            param.set(p);
        }
    }
}

/// Rescales the gradients of `store`'s parameters so their joint L2 norm is
/// at most `max_norm`. Returns the norm measured before clipping.
pub fn clip_grad_norm(store: &ParamStore, grads: &mut Gradients, max_norm: f64) -> f64 {
    let entries = store.entries();
    let total: f64 = entries
        .iter()
        .filter_map(|(_, p)| grads.get(&p.var()))
        .map(Tensor::sq_norm)
        .sum::<f64>()
        .sqrt();
    let coef = max_norm / (total + 1e-6);
    if coef < 1.0 {
        for (_, p) in &entries {
            if let Some(g) = grads.get_mut(&p.var()) {
                g.scale_in_place(coef);
            }
        }
    }
    total
}

/// `lr = base · gamma^(epoch / step_size)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLr {
    pub base_lr: f64,
    pub step_size: usize,
    pub gamma: f64,
}

impl StepLr {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.step_size.max(1)) as i32;
        if k == 0 {
            self.base_lr
        } else {
            self.base_lr * self.gamma.powi(k)
        }
    }
}
