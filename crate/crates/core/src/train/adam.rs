use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{Tensor, TensorMap};

/// `(lr0 − lr_end)·(1 − step/total)^power + lr_end`; steps past the end
/// give `lr_end`.
pub fn poly_decay(lr0: f64, lr_end: f64, step: u64, total: u64, power: f64) -> f64 {
    if total == 0 || step >= total {
        return lr_end;
    }
    let frac = 1.0 - step as f64 / total as f64;
    (lr0 - lr_end) * frac.powf(power) + lr_end
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with per-parameter moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub step: u64,
    pub m: TensorMap,
    pub v: TensorMap,
}

impl Adam {
    pub fn new(hyper: AdamHyper) -> Self {
        Self { hyper, step: 0, m: TensorMap::new(), v: TensorMap::new() }
    }

    /// Updates every parameter that has a gradient. All gradients are
    /// checked before anything is modified.
    pub fn update(&mut self, params: &mut TensorMap, grads: &TensorMap, lr: f64) -> Result<(), TrainError> {
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| TrainError::UnknownParam(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(TrainError::GradientShape { name: name.clone() });
            }
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
