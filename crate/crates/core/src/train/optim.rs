//! Parameter updates. Both optimizers walk the gradient map, so only
//! parameters with entries move; embedding rows outside a batch's active
//! sets stay bit-identical.

use std::collections::BTreeMap;

use crate::gradtape::{GradientMap, ParamKey, Value};
use crate::model::ModelParams;
use crate::scalar::Scalar;

use super::HyperParams;

/// `theta <- theta - lr * g` for every gradient entry.
pub fn sgd_step<F: Scalar>(params: &mut ModelParams<F>, grads: &GradientMap<F>, lr: F) {
    for (key, grad) in grads.iter() {
        let Some(slice) = params.tensor_mut(*key) else {
            continue;
        };
        for (theta, &g) in slice.iter_mut().zip(grad.as_slice()) {
            *theta -= lr * g;
        }
    }
}

/// Adds `2 * l2 * theta` to each present gradient entry. Regularization is
/// applied lazily to the parameters a batch touched, which preserves the
/// sparse-update property.
pub fn apply_l2<F: Scalar>(params: &ModelParams<F>, grads: &mut GradientMap<F>, l2: F) {
    if l2 <= F::zero() {
        return;
    }
    let two_l2 = F::from_f64(2.0) * l2;
    let keys: Vec<ParamKey> = grads.iter().map(|(k, _)| *k).collect();
    let mut reg = GradientMap::default();
    for key in keys {
        let theta = match key {
            ParamKey::Bias => Value::Scalar(params.w0),
            ParamKey::Linear(i) => Value::Scalar(params.w[i as usize]),
            ParamKey::Embed(i) => Value::Vector(params.v.row(i as usize).to_vec()),
            ParamKey::Weight => Value::Vector(params.h.clone()),
            ParamKey::Factor => Value::Matrix(params.l.clone()),
            ParamKey::LayerW(l) => Value::Matrix(params.mlp[l as usize].w.clone()),
            ParamKey::LayerB(l) => Value::Vector(params.mlp[l as usize].b.clone()),
        };
        let mut scaled = theta;
        for x in scaled.as_mut_slice() {
            *x *= two_l2;
        }
        reg.accumulate(key, &scaled);
    }
    grads.merge(&reg);
}

/// Rescales the whole map when its global norm exceeds `max_norm`.
pub fn clip_global_norm<F: Scalar>(grads: &mut GradientMap<F>, max_norm: F) {
    let norm = grads.global_norm();
    if norm > max_norm && norm > F::zero() {
        grads.scale(max_norm / norm);
    }
}

/// First/second moment state, kept per parameter key so sparsely touched
/// tensors follow their own bias-correction clock.
#[derive(Debug, Clone, Default)]
pub struct AdamState<F> {
    m: BTreeMap<ParamKey, Value<F>>,
    v: BTreeMap<ParamKey, Value<F>>,
    steps: BTreeMap<ParamKey, u32>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new() -> Self {
        AdamState {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            steps: BTreeMap::new(),
        }
    }

    /// Number of updates a parameter has received.
    pub fn steps(&self, key: ParamKey) -> u32 {
        self.steps.get(&key).copied().unwrap_or(0)
    }
}

/// Standard bias-corrected Adam update over the gradient entries.
pub fn adam_step<F: Scalar>(
    params: &mut ModelParams<F>,
    state: &mut AdamState<F>,
    grads: &GradientMap<F>,
    hyper: &HyperParams<F>,
) {
    let (b1, b2, eps, lr) = (hyper.beta1, hyper.beta2, hyper.eps, hyper.lr);
    for (key, grad) in grads.iter() {
        let Some(slice) = params.tensor_mut(*key) else {
            continue;
        };
        let t = state.steps.entry(*key).or_insert(0);
        *t += 1;
        let bc1 = F::one() - b1.powi(*t as i32);
        let bc2 = F::one() - b2.powi(*t as i32);
        let m = state.m.entry(*key).or_insert_with(|| grad.zeros_like());
        let v = state.v.entry(*key).or_insert_with(|| grad.zeros_like());
        for (((theta, &g), mi), vi) in slice
            .iter_mut()
            .zip(grad.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mi = b1 * *mi + (F::one() - b1) * g;
            *vi = b2 * *vi + (F::one() - b2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
