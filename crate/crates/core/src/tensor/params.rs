use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::dense::Tensor;
use super::graph::{Grads, Graph};
use crate::error::{Error, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named trainable tensor with its gradient and optimizer moments.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl Parameter {
    fn new(name: String, value: Tensor) -> Self {
        let n = value.len();
        let grad = Tensor::zeros(value.shape());
        Self {
            name,
            value,
            grad,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step_count: 0,
        }
    }
}

/// Owns the parameters of one model.
///
/// Graph nodes created with [`Graph::param`] remember which store they came
/// from, so gradients from one graph can be routed to several stores
/// independently.
#[derive(Clone, Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Parameter>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Usage(format!("duplicate parameter name {name}")));
        }
        self.params.push(Parameter::new(name, value));
        Ok(ParamId(self.params.len() - 1))
    }

    /// Adds a `[rows, cols]` matrix drawn from U(-a, a) with a = sqrt(6 / (rows + cols)).
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(&[rows, cols]))
    }

    pub fn add_filled(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        value: f64,
    ) -> Result<ParamId> {
        self.add(name, Tensor::filled(&[rows, cols], value))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Adds the gradients that `graph` computed for this store's parameters.
    pub fn accumulate(&mut self, graph: &Graph, grads: &Grads) {
        for (var, store, index) in graph.param_nodes() {
            if store != self.id {
                continue;
            }
            if let Some(g) = grads.get(var) {
                let dst = self.params[index].grad.data_mut();
                for (d, s) in dst.iter_mut().zip(g.data()) {
                    *d += s;
                }
            }
        }
    }

    /// Overwrites every value with the ones from `other`, matching by name.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            let src = other
                .params
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| Error::format(format!("missing parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::format(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    src.value.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamW {
    /// Applies one update to every parameter in `store` from its current grad.
    pub fn step(&self, store: &mut ParamStore) {
        for p in store.iter_mut() {
            p.step_count += 1;
            let t = p.step_count as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let decay = 1.0 - self.lr * self.weight_decay;
            let values = p.value.data_mut();
            for (i, x) in values.iter_mut().enumerate() {
                let g = p.grad.data()[i];
                *x *= decay;
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g;
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64], grads: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::row(values)).unwrap();
        s.get_mut(id).grad = Tensor::row(grads);
        s
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::scalar(1.0)).unwrap();
        assert!(s.add("a", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params() {
        let mut s = store_with(&[0.3, -1.2, 4.0], &[0.0; 3]);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut s);
        assert_eq!(s.iter().next().unwrap().value.data(), &[0.3, -1.2, 4.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // One bias-corrected step: m_hat = g, v_hat = g^2, so the move is
        // lr * g / (|g| + eps), i.e. almost exactly lr in the direction of -g.
        let mut s = store_with(&[1.0, 1.0, 1.0], &[0.5, -2.0, 1e-3]);
        let opt = AdamW {
            lr: 0.01,
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut s);
        let v = s.iter().next().unwrap().value.data().to_vec();
        let expect = |g: f64| 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((v[0] - expect(0.5)).abs() < 1e-12);
        assert!((v[1] - expect(-2.0)).abs() < 1e-12);
        assert!((v[2] - expect(1e-3)).abs() < 1e-12);
        assert!(v[0] < 1.0 && v[1] > 1.0);
    }

    #[test]
    fn decay_only_shrinks_by_factor() {
        let mut s = store_with(&[2.0, -4.0], &[0.0, 0.0]);
        let opt = AdamW {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamW::default()
        };
        opt.step(&mut s);
        let v = s.iter().next().unwrap().value.data().to_vec();
        assert!((v[0] - 2.0 * 0.95).abs() < 1e-12);
        assert!((v[1] + 4.0 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn zero_decay_matches_plain_adam_over_several_steps() {
        // Plain Adam written out independently.
        let grads = [[0.3, -0.7], [0.1, 0.2], [-0.5, 0.05], [0.9, -0.9]];
        let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.05, 0.9, 0.999, 1e-8);
        let mut x = [0.4, -0.1];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        for (t, g) in grads.iter().enumerate() {
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t as i32 + 1));
                let vh = v[i] / (1.0 - b2.powi(t as i32 + 1));
                x[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }

        let mut s = store_with(&[0.4, -0.1], &[0.0, 0.0]);
        let opt = AdamW {
            lr,
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: 0.0,
        };
        for g in &grads {
            s.iter_mut().next().unwrap().grad = Tensor::row(g);
            opt.step(&mut s);
        }
        let got = s.iter().next().unwrap().value.data().to_vec();
        for i in 0..2 {
            assert!((got[i] - x[i]).abs() < 1e-14, "{got:?} vs {x:?}");
        }
    }
}
