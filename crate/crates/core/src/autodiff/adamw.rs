//! AdamW: Adam with weight decay applied to the parameters, not folded into the gradient.
//!
//! ```text
//! θ ← θ − lr·wd·θ
//! m ← β₁ m + (1 − β₁) g
//! v ← β₂ v + (1 − β₂) g²
//! θ ← θ − lr · m̂ / (√v̂ + ε),   m̂ = m / (1 − β₁ᵗ),  v̂ = v / (1 − β₂ᵗ)
//! ```

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamWState<T> {
    pub config: AdamWConfig,
    pub step: u64,
    first: IndexMap<String, DenseMatrix<T>>,
    second: IndexMap<String, DenseMatrix<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    /// One update of every parameter from its accumulated gradient.
    pub fn step(&mut self, params: &mut ParamSet<T>) {
        self.step_filtered(params, |_| true);
    }

    /// Like [`step`](Self::step) but leaves parameters outside `names` untouched, including
    /// their weight decay.
    pub fn step_only(&mut self, params: &mut ParamSet<T>, names: &[&str]) {
        self.step_filtered(params, |name| names.contains(&name));
    }

    fn step_filtered(&mut self, params: &mut ParamSet<T>, keep: impl Fn(&str) -> bool) {
        self.step += 1;
        let cfg = self.config;
        let t = self.step as i32;
        let lr = T::of(cfg.lr);
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let eps = T::of(cfg.eps);
        let decay = T::one() - lr * T::of(cfg.weight_decay);
        let correction1 = T::one() - b1.powi(t);
        let correction2 = T::one() - b2.powi(t);

        for (name, p) in params.iter_mut() {
            if !keep(name) {
                continue;
            }
            let (rows, cols) = p.value.shape();
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| DenseMatrix::zeros(rows, cols));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| DenseMatrix::zeros(rows, cols));
            let grads = p.grad.values();
            for (i, theta) in p.value.values_mut().iter_mut().enumerate() {
                let g = grads[i];
                let mi = &mut m.values_mut()[i];
                *mi = b1 * *mi + (T::one() - b1) * g;
                let m_hat = *mi / correction1;
                let vi = &mut v.values_mut()[i];
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let v_hat = *vi / correction2;
                *theta = *theta * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.second.get(name)
    }
}
