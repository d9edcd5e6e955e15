use serde::{Deserialize, Serialize};

use super::{Param, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one parameter group.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    learning_rate: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters>(params: &P, learning_rate: f64, config: AdamConfig) -> Self {
        let list: Vec<&Param> = params.named_params().into_iter().map(|(_, p)| p).collect();
        Self::for_params(&list, learning_rate, config)
    }

    /// Optimizer for an explicit parameter subset; `step_params` must then be
    /// given the same subset in the same order.
    pub fn for_params(params: &[&Param], learning_rate: f64, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            config,
            learning_rate,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one bias-corrected update of `params` from `grads`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let params = params.named_params_mut().into_iter().map(|(_, p)| p).collect();
        let grads = grads.named_params().into_iter().map(|(_, p)| p).collect();
        self.step_params(params, grads);
    }

    pub fn step_params(&mut self, params: Vec<&mut Param>, grads: Vec<&Param>) {
        assert_eq!(params.len(), self.first.len(), "parameter list changed between steps");
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let lr = self.learning_rate;
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..p.value.len() {
                let gj = g.value[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p.value[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Param};

    fn quadratic() -> Linear {
        Linear {
            weight: Param {
                shape: vec![1, 2],
                value: vec![3.0, -2.0],
            },
            bias: Param {
                shape: vec![1],
                value: vec![1.0],
            },
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = quadratic();
        let mut g = p.clone();
        let mut opt = Adam::new(&p, 0.1, AdamConfig::default());
        opt.step(&mut p, &g.clone());
        // bias-corrected first step is lr * sign(g)
        assert!((p.weight.value[0] - 2.9).abs() < 1e-6);
        assert!((p.weight.value[1] + 1.9).abs() < 1e-6);
        g.scale(0.0);
        let before = p.clone();
        let mut zero_lr = Adam::new(&p, 0.0, AdamConfig::default());
        zero_lr.step(&mut p, &quadratic());
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_a_bowl() {
        let mut p = quadratic();
        let mut opt = Adam::new(&p, 0.05, AdamConfig::default());
        for _ in 0..2000 {
            // gradient of 0.5 * ||p||^2 is p itself
            let g = p.clone();
            opt.step(&mut p, &g);
        }
        assert!(p
            .named_params()
            .iter()
            .all(|(_, q)| q.value.iter().all(|v| v.abs() < 1e-2)));
    }
}
