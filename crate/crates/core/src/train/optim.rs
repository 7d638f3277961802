//! Adam with L2 weight decay folded into the gradient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ParamSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of a single tensor at step `t` (1-based).
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    weight_decay: f64,
    specs: Vec<ParamSpec>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(specs: Vec<ParamSpec>, cfg: AdamConfig, weight_decay: f64) -> Self {
        let m = specs.iter().map(|s| vec![0.0; s.len]).collect::<Vec<_>>();
        Adam {
            cfg,
            weight_decay,
            v: m.clone(),
            m,
            specs,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Adds `weight_decay * param` to the gradient of every decayed tensor,
    /// then applies one Adam update. A non-finite gradient aborts before any
    /// parameter changes.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != self.specs.len() || grads.len() != self.specs.len() {
            return Err(Error::Shape {
                op: "Adam::step",
                expected: (self.specs.len(), 1),
                found: (params.len(), grads.len()),
            });
        }
        let mut effective: Vec<Vec<f64>> = Vec::with_capacity(grads.len());
        for ((spec, p), g) in self.specs.iter().zip(params.iter()).zip(&grads) {
            if p.len() != spec.len || g.len() != spec.len {
                return Err(Error::Shape {
                    op: "Adam::step tensor",
                    expected: (spec.len, 1),
                    found: (g.len(), 1),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("gradient of {}", spec.name),
                });
            }
            let mut e = g.to_vec();
            if spec.decay && self.weight_decay != 0.0 {
                for (ei, &pi) in e.iter_mut().zip(p.iter()) {
                    *ei += self.weight_decay * pi;
                }
            }
            effective.push(e);
        }
        self.t += 1;
        for (k, p) in params.iter_mut().enumerate() {
            adam_update(p, &effective[k], &mut self.m[k], &mut self.v[k], self.t, &self.cfg);
        }
        Ok(())
    }
}
