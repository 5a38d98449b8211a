//! Adam optimizer over the model's parameter set.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::model::ModelBundle;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

/// First and second moment estimates, aligned with the model's parameter
/// visiting order.
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new(model: &mut ModelBundle, cfg: AdamConfig) -> Self {
        let mut m = Vec::new();
        let mut v = Vec::new();
        model.visit_params(&mut |p| {
            m.push(ArrayD::zeros(p.value.raw_dim()));
            v.push(ArrayD::zeros(p.value.raw_dim()));
        });
        Self { cfg, m, v, t: 0 }
    }

    /// One update from the gradients currently accumulated in the model.
    pub fn step(&mut self, model: &mut ModelBundle, lr: f64) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        let eps = self.cfg.eps;
        let mut k = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |p| {
            let mk = &mut m[k];
            let vk = &mut v[k];
            for ((pv, g), (mm, vv)) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(mk.iter_mut().zip(vk.iter_mut()))
            {
                *mm = b1 * *mm + (1.0 - b1) * g;
                *vv = b2 * *vv + (1.0 - b2) * g * g;
                let mhat = *mm / bias1;
                let vhat = *vv / bias2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
            k += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderConfig;

    #[test]
    fn step_moves_parameters_against_gradient() {
        let cfg = EncoderConfig {
            width: 2,
            depth: 1,
            latent_dim: 4,
            ..EncoderConfig::default()
        };
        let mut model = ModelBundle::new(&cfg, 2, 4, (12, 10), 3).unwrap();
        let mut adam = Adam::new(&mut model, AdamConfig::default());

        let mut before = Vec::new();
        model.visit_params(&mut |p| before.push(p.value.clone()));
        // Uniform positive gradient: every parameter must decrease.
        model.visit_params(&mut |p| p.grad.fill(1.0));
        adam.step(&mut model, 1e-3);
        let mut idx = 0;
        model.visit_params(&mut |p| {
            for (after, b) in p.value.iter().zip(before[idx].iter()) {
                assert!(after < b);
            }
            idx += 1;
        });
        assert_eq!(adam.t, 1);
    }
}
