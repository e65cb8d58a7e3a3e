use rand::Rng;

use crate::error::Result;
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};

/// Affine layers with SiLU between them; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    dims: Vec<usize>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`; tensors are named `{prefix}.{i}.w/b`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(dims.len().saturating_sub(1));
        for (i, pair) in dims.windows(2).enumerate() {
            let w = store.add_glorot(&format!("{prefix}.{i}.w"), pair[0], pair[1], rng)?;
            let b = store.add(&format!("{prefix}.{i}.b"), crate::nn::Matrix::zeros(1, pair[1]))?;
            layers.push((w, b));
        }
        Ok(Self { layers, dims: dims.to_vec() })
    }

    /// Re-binds an already-populated store by tensor names.
    pub fn bind(store: &ParamStore, prefix: &str, n_layers: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(n_layers);
        let mut dims = Vec::new();
        for i in 0..n_layers {
            let w = store.id(&format!("{prefix}.{i}.w"))?;
            let b = store.id(&format!("{prefix}.{i}.b"))?;
            if i == 0 {
                dims.push(store.get(w).rows());
            }
            dims.push(store.get(w).cols());
            layers.push((w, b));
        }
        Ok(Self { layers, dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap_or(&0)
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    /// Forward pass; with `frozen` the parameters enter as constants.
    pub fn apply_with(&self, tape: &mut Tape, store: &ParamStore, x: Var, frozen: bool) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = if frozen {
                (tape.frozen_param(store, w), tape.frozen_param(store, b))
            } else {
                (tape.param(store, w), tape.param(store, b))
            };
            h = tape.affine(h, wv, bv)?;
            if i + 1 < self.layers.len() {
                h = tape.silu(h);
            }
        }
        Ok(h)
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.apply_with(tape, store, x, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use rand::SeedableRng;

    fn silu(v: f64) -> f64 {
        v / (1.0 + (-v).exp())
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut t = Tape::new();
        let x = t.constant(Matrix::new(1, 3, vec![1.0, -2.0, 3.0]).unwrap());
        let y = mlp.apply(&mut t, &store, x).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 3], &mut rng).unwrap();
        let (w, _) = mlp.layers()[0];
        *store.get_mut(w) = Matrix::new(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(Matrix::new(1, 3, vec![0.25, -7.0, 3.5]).unwrap());
        let y = mlp.apply(&mut t, &store, x).unwrap();
        assert_eq!(t.value(y).data(), &[0.25, -7.0, 3.5]);
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[4, 6, 3], &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut t = Tape::new();
        let xv = t.constant(Matrix::new(1, 4, x.clone()).unwrap());
        let y = mlp.apply(&mut t, &store, xv).unwrap();

        let layer = |inp: &[f64], w: &Matrix, b: &Matrix| -> Vec<f64> {
            (0..w.cols())
                .map(|j| b.get(0, j) + (0..w.rows()).map(|i| inp[i] * w.get(i, j)).sum::<f64>())
                .collect()
        };
        let (w0, b0) = mlp.layers()[0];
        let (w1, b1) = mlp.layers()[1];
        let h: Vec<f64> = layer(&x, store.get(w0), store.get(b0)).into_iter().map(silu).collect();
        let want = layer(&h, store.get(w1), store.get(b1));
        for (a, b) in t.value(y).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 2], &mut rng).unwrap();
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros(1, 4));
        assert!(mlp.apply(&mut t, &store, x).is_err());
    }
}
