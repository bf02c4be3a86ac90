use serde::{Deserialize, Serialize};

use super::ParamStore;

/// Adam with decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One update of every parameter from its accumulated gradient.
    /// Gradients are left in place.
    pub fn step(&self, params: &mut ParamStore, lr: f64, weight_decay: f64) {
        let Adam { beta1, beta2, eps } = *self;
        params.update_each(|t, value, grad, m, v| {
            let c1 = 1.0 - beta1.powi(t as i32);
            let c2 = 1.0 - beta2.powi(t as i32);
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * value[i]);
            }
        });
    }
}

/// Convenience wrapper over [`Adam::step`] with default moments.
pub fn optimizer_step(params: &mut ParamStore, lr: f64, weight_decay: f64) {
    Adam::default().step(params, lr, weight_decay);
}
