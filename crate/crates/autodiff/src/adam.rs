use serde::{Deserialize, Serialize};

use crate::error::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Added to the gradient as `weight_decay * param`.
    #[serde(default)]
    pub weight_decay: f64,
    /// Learning rate is multiplied by this every `decay_step` epochs.
    #[serde(default = "default_decay_rate")]
    pub decay_rate: f64,
    #[serde(default = "default_decay_step")]
    pub decay_step: usize,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_decay_rate() -> f64 {
    1.0
}
fn default_decay_step() -> usize {
    1
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
            decay_rate: default_decay_rate(),
            decay_step: default_decay_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step: u64,
    pub epoch: usize,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            epoch: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }

    /// Step-decayed learning rate for the current epoch.
    pub fn learning_rate(&self) -> f64 {
        let c = &self.config;
        let k = self.epoch / c.decay_step.max(1);
        c.learning_rate * c.decay_rate.powi(k as i32)
    }

    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), AutodiffError> {
        adam_step(self, params, grads)
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    opt: &mut OptimState,
    params: &mut [f64],
    grads: &[f64],
) -> Result<(), AutodiffError> {
    let n = opt.first_moment.len();
    for len in [params.len(), grads.len()] {
        if len != n {
            return Err(AutodiffError::ShapeMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    opt.step += 1;
    let lr = opt.learning_rate();
    let c = opt.config;
    let bc1 = 1.0 - c.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - c.beta2.powi(opt.step as i32);
    for i in 0..n {
        let g = grads[i] + c.weight_decay * params[i];
        let m = c.beta1 * opt.first_moment[i] + (1.0 - c.beta1) * g;
        let v = c.beta2 * opt.second_moment[i] + (1.0 - c.beta2) * g * g;
        opt.first_moment[i] = m;
        opt.second_moment[i] = v;
        params[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
    }
    Ok(())
}
