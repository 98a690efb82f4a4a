//! Adam with Nesterov momentum (Nadam).
//!
//! Per element, at step `t` (1-based):
//!
//! ```text
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! m̄ = β1·m / (1−β1^(t+1)) + (1−β1)·g / (1−β1^t)
//! θ ← θ − lr · m̄ / (√(v / (1−β2^t)) + ε)
//! ```

use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NadamState<T = f32> {
    pub config: NadamConfig,
    pub step: u64,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
}

impl<T: Real> NadamState<T> {
    /// Fresh state for a parameter store holding `len` scalars.
    pub fn new(config: NadamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
        }
    }

    /// Applies one update to every tensor, reading gradients from their
    /// gradient slots. Tensors without a gradient are treated as having a
    /// zero gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments for {total} parameters",
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let c = self.coefficients();
        let mut offset = 0;
        for p in params.iter_mut() {
            let n = p.len();
            let grad = p.grad().map(<[T]>::to_vec);
            let m = &mut self.first_moment[offset..offset + n];
            let v = &mut self.second_moment[offset..offset + n];
            match grad {
                Some(g) => update(p.data_mut(), &g, m, v, &c),
                None => update(p.data_mut(), &vec![T::zero(); n], m, v, &c),
            }
            offset += n;
        }
        Ok(())
    }

    /// Same update over raw slices; `params` and `grads` must be congruent
    /// with the state.
    pub fn step_slices(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let c = self.coefficients();
        update(params, grads, &mut self.first_moment, &mut self.second_moment, &c);
        Ok(())
    }

    fn coefficients(&self) -> Coefficients<T> {
        let cfg = &self.config;
        let t = self.step as i32;
        Coefficients {
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.beta1),
            beta2: T::lit(cfg.beta2),
            eps: T::lit(cfg.epsilon),
            momentum_corr: T::lit(cfg.beta1 / (1.0 - cfg.beta1.powi(t + 1))),
            grad_corr: T::lit((1.0 - cfg.beta1) / (1.0 - cfg.beta1.powi(t))),
            var_corr: T::lit(1.0 / (1.0 - cfg.beta2.powi(t))),
        }
    }
}

struct Coefficients<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    momentum_corr: T,
    grad_corr: T,
    var_corr: T,
}

fn update<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], c: &Coefficients<T>) {
    let one = T::one();
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = c.beta1 * *m + (one - c.beta1) * g;
        *v = c.beta2 * *v + (one - c.beta2) * g * g;
        let m_bar = c.momentum_corr * *m + c.grad_corr * g;
        *p -= c.lr * m_bar / ((*v * c.var_corr).sqrt() + c.eps);
    }
}
