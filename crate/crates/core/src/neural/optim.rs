use super::network::{Gradients, Network};
use serde::{Deserialize, Serialize};

/// Adam with bias correction (Kingma & Ba, 2015).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

/// Optimizer identity recorded in training manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub kind: String,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn info(&self) -> OptimizerInfo {
        OptimizerInfo {
            kind: "adam".into(),
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update from (already averaged) gradients.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            let groups = [
                (
                    &mut layer.weights,
                    &grads.weights[i],
                    &mut self.m.weights[i],
                    &mut self.v.weights[i],
                ),
                (
                    &mut layer.biases,
                    &grads.biases[i],
                    &mut self.m.biases[i],
                    &mut self.v.biases[i],
                ),
            ];
            for (params, g, m, v) in groups {
                for j in 0..params.len() {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    params[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
