//! Adam with linear warmup followed by inverse-square-root decay.

use super::model::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.98, eps: 1e-8 }
    }
}

/// `peak * min(step / warmup, sqrt(warmup / step))` for 1-based `step`.
pub fn learning_rate(peak: f64, warmup: usize, step: usize) -> f64 {
    let step = step.max(1) as f64;
    if warmup == 0 {
        return peak / step.sqrt();
    }
    let warmup = warmup as f64;
    peak * (step / warmup).min((warmup / step).sqrt())
}

pub struct Adam {
    config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(params: &Params, config: AdamConfig) -> Self {
        let n = params.num_values();
        Adam { config, first: vec![0.0; n], second: vec![0.0; n], steps: 0 }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps);
        let c2 = 1.0 - beta2.powi(self.steps);
        let g = grads.flatten();
        let (m, v) = (&mut self.first, &mut self.second);
        let mut offset = 0;
        params.visit_mut(&mut |_, _, _, values| {
            for (j, p) in values.iter_mut().enumerate() {
                let i = offset + j;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                *p -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
            offset += values.len();
        });
    }
}
