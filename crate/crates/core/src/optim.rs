//! Adam with coupled L2 weight decay (`g += λ·θ` before the moment updates).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Grads, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig, params: &ParamSet<S>) -> Self {
        let zeros = || params.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update of every parameter.
    pub fn update(&mut self, params: &mut ParamSet<S>, grads: &Grads<S>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr_t = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let (b1, b2, eps, wd, lr) = (S::of(c.beta1), S::of(c.beta2), S::of(c.eps), S::of(c.weight_decay), S::of(lr_t));
        let bc2 = S::of(1.0 - c.beta2.powi(t)).sqrt();
        let one = S::one();
        for (i, theta) in params.values_mut().iter_mut().enumerate() {
            let g = grads.tensors[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, p) in theta.data_mut().iter_mut().enumerate() {
                let gj = g[j] + wd * *p;
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                // eps applies to the bias-corrected second moment
                *p -= lr * m[j] / (v[j].sqrt() + eps * bc2);
            }
        }
    }

    /// Moment tensors named after their parameters, for checkpoints.
    pub fn named_state(&self, params: &ParamSet<S>) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for (name, m) in params.names().iter().zip(&self.m) {
            out.push((format!("adam.m.{name}"), m.clone()));
        }
        for (name, v) in params.names().iter().zip(&self.v) {
            out.push((format!("adam.v.{name}"), v.clone()));
        }
        out
    }

    pub fn from_named_state(config: AdamConfig, step: u64, params: &ParamSet<S>, tensors: &[(String, Tensor<S>)]) -> Result<Self> {
        let find = |prefix: &str, name: &str, shape: &[usize]| -> Result<Tensor<S>> {
            let key = format!("{prefix}.{name}");
            let t = tensors
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {key}")))?;
            if t.shape() != shape {
                return Err(Error::Checkpoint(format!("optimizer tensor {key} has the wrong shape")));
            }
            Ok(t)
        };
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, p) in params.iter() {
            m.push(find("adam.m", name, p.shape())?);
            v.push(find("adam.v", name, p.shape())?);
        }
        Ok(Self { config, step, m, v })
    }
}
