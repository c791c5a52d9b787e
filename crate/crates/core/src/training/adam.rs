use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sparse::{Gradients, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates of one tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut Moments, t: u64, lr: f64, c: &AdamConfig) {
    if state.m.len() != theta.len() {
        state.m = vec![0.0; theta.len()];
        state.v = vec![0.0; theta.len()];
    }
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        theta[i] -= lr * mh / (vh.sqrt() + c.eps);
    }
}

/// Adam over a named parameter store.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0, state: BTreeMap::new() }
    }

    /// Updates every parameter for which `trains` holds; others are left
    /// untouched bit for bit.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64, trains: impl Fn(&str) -> bool) -> Result<()> {
        self.t += 1;
        for (name, p) in store.iter_mut() {
            if !trains(name) {
                continue;
            }
            let Some(g) = grads.get(name) else { continue };
            if g.len() != p.data.len() {
                return Err(Error::Shape(format!("gradient of '{name}' has {} entries, parameter {}", g.len(), p.data.len())));
            }
            let st = self.state.entry(name.clone()).or_default();
            adam_step(&mut p.data, g, st, self.t, lr, &self.config);
        }
        Ok(())
    }
}
