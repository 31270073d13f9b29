use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{DenseNet, Gradients};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    m: Gradients<T>,
    v: Gradients<T>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &DenseNet<T>, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            config,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(net: &mut DenseNet<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    if !grads.same_shape(net) || !state.m.same_shape(net) {
        return Err(Error::Shape("gradients or optimizer state do not match network".into()));
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let t = state.step as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(c.lr), T::of(c.eps));
    let params = net.weights.iter_mut().chain(net.biases.iter_mut());
    let gs = grads.weights.iter().chain(&grads.biases);
    let ms = state.m.weights.iter_mut().chain(state.m.biases.iter_mut());
    let vs = state.v.weights.iter_mut().chain(state.v.biases.iter_mut());
    for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
