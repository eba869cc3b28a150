use super::ParamSet;
use crate::error::TensorError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient (classic Adam, not AdamW).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step to match the parameter shapes.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update using the gradients stored on `params`.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<(), TensorError> {
        for (_, name, t) in params.iter() {
            if t.grad().is_none() {
                return Err(TensorError::MissingGradient(name.to_string()));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam_step",
                detail: format!("optimizer tracks {} parameters, got {}", self.first.len(), params.len()),
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let t = params.get_mut(id);
            let grad = t.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                let g = grad[i] + weight_decay * *x;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
