use serde::{Deserialize, Serialize};

/// Adam hyperparameters and a step-drop learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled L2 shrinkage applied with the update.
    pub weight_decay: f64,
    /// Multiply the learning rate by `lr_drop_factor` from this step on (0 disables).
    pub lr_drop_step: usize,
    pub lr_drop_factor: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            lr_drop_step: 0,
            lr_drop_factor: 0.3,
        }
    }
}

/// Adaptive-moment gradient descent over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    t: usize,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Adam {
            config,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn learning_rate(&self) -> f64 {
        let c = &self.config;
        if c.lr_drop_step > 0 && self.t >= c.lr_drop_step {
            c.learning_rate * c.lr_drop_factor
        } else {
            c.learning_rate
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grad.len(), self.first.len());
        let lr = self.learning_rate();
        self.t += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *p);
        }
    }
}
