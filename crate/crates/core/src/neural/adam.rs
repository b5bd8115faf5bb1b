use serde::{Deserialize, Serialize};

use super::net::{NetworkConfig, Weights};
use super::tensor::Scalar;
use super::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments mirroring the parameter arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Weights<T>,
    pub v: Weights<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &NetworkConfig, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Weights::zeros(net),
            v: Weights::zeros(net),
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut Weights<T>, grads: &Weights<T>) -> Result<(), NeuralError> {
        let shapes = |w: &Weights<T>| -> Vec<Vec<usize>> {
            w.tensors().iter().map(|t| t.shape().to_vec()).collect()
        };
        if shapes(params) != shapes(grads) || shapes(params) != shapes(&self.m) {
            return Err(NeuralError::Shape("optimizer and parameter shapes differ".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr_t = c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one, lr_t) = (T::one(), T::of(lr_t));
        // Scaling eps by the second-moment bias correction keeps the update
        // identical to the textbook form with bias-corrected moments.
        let eps = T::of(c.eps * (1.0 - c.beta2.powi(t)).sqrt());
        let groups = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in groups {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in iter {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + eps);
            }
        }
        Ok(())
    }
}
