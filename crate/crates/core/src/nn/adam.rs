use ndarray::{Array2, Zip};

use super::params::{Grads, ParamStore};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates for one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || -> Vec<Array2<f64>> {
            store.iter().map(|p| Array2::zeros(p.value.dim())).collect()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// One bias-corrected update. Nothing is modified if any gradient entry
    /// is non-finite.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Grads) -> Result<(), NnError> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(NnError::DimensionMismatch {
                op: "adam_update",
                expected: format!("{} parameter arrays", store.len()),
                got: format!("{} gradients", grads.len()),
            });
        }
        for (id, g) in store.ids().zip(grads.iter()) {
            if g.dim() != store.get(id).dim() {
                return Err(NnError::DimensionMismatch {
                    op: "adam_update",
                    expected: format!("{:?} for {}", store.get(id).dim(), store.name(id)),
                    got: format!("{:?}", g.dim()),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient(store.name(id).to_string()));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((param, g), (m, v)) in store
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            Zip::from(&mut param.value)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|theta, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *theta -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }

    pub fn moments_finite(&self) -> bool {
        self.first
            .iter()
            .chain(&self.second)
            .all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub fn second_moments_nonnegative(&self) -> bool {
        self.second.iter().all(|a| a.iter().all(|&v| v >= 0.0))
    }
}
