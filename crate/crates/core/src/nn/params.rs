use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

/// Handle to a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Matrix,
    /// Learning rate override for this tensor.
    pub lr: Option<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Named parameter tensors with Adam state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Matrix) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Invariant(format!("duplicate tensor name `{name}`")));
        }
        let n = value.data().len();
        self.index.insert(name.to_string(), self.tensors.len());
        self.tensors.push(Tensor { name: name.to_string(), value, lr: None, m: vec![0.0; n], v: vec![0.0; n] });
        Ok(ParamId(self.tensors.len() - 1))
    }

    /// Glorot-uniform `fan_in x fan_out` weight.
    pub fn add_glorot<R: Rng + ?Sized>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<ParamId> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
        self.add(name, Matrix::new(fan_in, fan_out, data)?)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index.get(name).map(|&i| ParamId(i)).ok_or_else(|| Error::UnknownTensor(name.into()))
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0].value
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data().len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn set_lr(&mut self, id: ParamId, lr: f64) {
        self.tensors[id.0].lr = Some(lr);
    }

    /// One Adam update with bias correction. Tensors without a gradient
    /// are treated as having a zero gradient.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64, cfg: AdamConfig) -> Result<()> {
        for (t, g) in self.tensors.iter().zip(&grads.grads) {
            if let Some(g) = g {
                if g.shape() != t.value.shape() {
                    return Err(Error::Shape(format!("gradient for `{}` has the wrong shape", t.name)));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite { what: format!("gradient of tensor `{}`", t.name) });
                }
            }
        }
        if grads.grads.len() > self.tensors.len() {
            return Err(Error::Shape("more gradients than tensors".into()));
        }
        self.step += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.step as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.step as i32);
        for (i, t) in self.tensors.iter_mut().enumerate() {
            let lr = t.lr.unwrap_or(lr);
            let g = grads.grads.get(i).and_then(Option::as_ref);
            let data = t.value.data_mut();
            for j in 0..data.len() {
                let gj = g.map_or(0.0, |g| g.data()[j]);
                t.m[j] = cfg.beta1 * t.m[j] + (1.0 - cfg.beta1) * gj;
                t.v[j] = cfg.beta2 * t.v[j] + (1.0 - cfg.beta2) * gj * gj;
                let mhat = t.m[j] / b1t;
                let vhat = t.v[j] / b2t;
                data[j] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Gradients aligned with a [`ParamStore`]; `None` means zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub(crate) grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: vec![None; store.len()] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient value at flat coordinate `j` of tensor `id`.
    pub fn value(&self, id: ParamId, j: usize) -> f64 {
        self.get(id).map_or(0.0, |g| g.data()[j])
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Matrix) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(g),
            slot => *slot = Some(g.clone()),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= k;
            }
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_grads(store: &ParamStore, id: ParamId, target: &[f64]) -> Gradients {
        let mut g = Gradients::zeros_like(store);
        let w = store.get(id);
        let data = w.data().iter().zip(target).map(|(w, t)| 2.0 * (w - t)).collect();
        g.accumulate(id, &Matrix::new(1, w.cols(), data).unwrap());
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = ParamStore::new();
        let id = s.add("w", Matrix::new(1, 2, vec![0.5, -1.0]).unwrap()).unwrap();
        let before = s.get(id).clone();
        s.adam_step(&Gradients::zeros_like(&s), 0.1, AdamConfig::default()).unwrap();
        assert_eq!(s.get(id), &before);
    }

    #[test]
    fn one_step_descends() {
        let mut s = ParamStore::new();
        let id = s.add("w", Matrix::scalar(1.0)).unwrap();
        let g = quad_grads(&s, id, &[0.0]);
        s.adam_step(&g, 0.1, AdamConfig::default()).unwrap();
        assert!(s.get(id).item() < 1.0);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = ParamStore::new();
        let id = s.add("w", Matrix::new(1, 2, vec![0.0, 0.0]).unwrap()).unwrap();
        let target = [0.3, -0.2];
        for i in 0..200 {
            let g = quad_grads(&s, id, &target);
            // decaying step so the iterate settles
            let lr = 0.05 * (1.0 - i as f64 / 200.0);
            s.adam_step(&g, lr, AdamConfig::default()).unwrap();
        }
        let w = s.get(id).data();
        let err = ((w[0] - target[0]).powi(2) + (w[1] - target[1]).powi(2)).sqrt();
        assert!(err < 1e-3, "err {err}");
    }

    #[test]
    fn nan_gradient_names_tensor() {
        let mut s = ParamStore::new();
        let id = s.add("log_Z", Matrix::scalar(0.0)).unwrap();
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(id, &Matrix::scalar(f64::NAN));
        let err = s.adam_step(&g, 0.1, AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("log_Z"));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn per_tensor_lr_override() {
        let mut s = ParamStore::new();
        let a = s.add("a", Matrix::scalar(1.0)).unwrap();
        let b = s.add("b", Matrix::scalar(1.0)).unwrap();
        s.set_lr(b, 0.0);
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(a, &Matrix::scalar(1.0));
        g.accumulate(b, &Matrix::scalar(1.0));
        s.adam_step(&g, 0.1, AdamConfig::default()).unwrap();
        assert!(s.get(a).item() < 1.0);
        assert_eq!(s.get(b).item(), 1.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Matrix::scalar(0.0)).unwrap();
        assert!(s.add("w", Matrix::scalar(0.0)).is_err());
        assert!(s.id("nope").is_err());
    }
}
