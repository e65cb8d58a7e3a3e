//! Reverse-mode gradient tape over dense matrices.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::nn::params::{Gradients, ParamId, ParamStore};

/// A node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    /// `x W + b` with `b` broadcast over rows.
    Affine { x: Var, w: Var, b: Var },
    Silu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Sum(Var),
    SumCols(Var),
    /// Per-segment row sum or mean; empty segments give zero rows.
    Segment { x: Var, seg: Vec<usize>, counts: Vec<usize>, mean: bool },
    Gather { x: Var, idx: Vec<usize> },
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SegmentLogSoftmax { x: Var, seg: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    grad: bool,
}

/// Records operations in execution order, which is a topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, grad: bool) -> Var {
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn g(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Loads a parameter once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    /// Loads a parameter as a constant, cutting gradient flow.
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.constant(store.get(id).clone())
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, i) = self.shape(x);
        let (wi, o) = self.shape(w);
        if i != wi || self.shape(b) != (1, o) {
            return Err(Error::Shape(format!(
                "affine: input {n}x{i}, weight {wi}x{o}, bias {:?}",
                self.shape(b)
            )));
        }
        let mut y = self.value(x).matmul(self.value(w))?;
        let bias = self.value(b).data().to_vec();
        for r in 0..n {
            for (v, bv) in y.row_mut(r).iter_mut().zip(&bias) {
                *v += bv;
            }
        }
        let grad = self.g(x) || self.g(w) || self.g(b);
        Ok(self.push(y, Op::Affine { x, w, b }, grad))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v * sigmoid(v));
        let grad = self.g(x);
        self.push(y, Op::Silu(x), grad)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let y = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let grad = self.g(a) || self.g(b);
        Ok(self.push(y, Op::Add(a, b), grad))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let y = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let grad = self.g(a) || self.g(b);
        Ok(self.push(y, Op::Sub(a, b), grad))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let y = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let grad = self.g(a) || self.g(b);
        Ok(self.push(y, Op::Mul(a, b), grad))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let y = self.value(a).map(|v| v * k);
        let grad = self.g(a);
        self.push(y, Op::Scale(a, k), grad)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|v| v * v);
        let grad = self.g(a);
        self.push(y, Op::Square(a), grad)
    }

    /// Sum of all entries, as a 1x1 matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let y = Matrix::scalar(self.value(a).data().iter().sum());
        let grad = self.g(a);
        self.push(y, Op::Sum(a), grad)
    }

    /// Row sums, as an `n x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let y = Matrix::column((0..m.rows()).map(|r| m.row(r).iter().sum()).collect());
        let grad = self.g(a);
        self.push(y, Op::SumCols(a), grad)
    }

    fn segment(&mut self, x: Var, seg: &[usize], n_seg: usize, mean: bool) -> Result<Var> {
        let m = self.value(x);
        if seg.len() != m.rows() || seg.iter().any(|&s| s >= n_seg) {
            return Err(Error::Shape(format!("segment ids do not fit {} rows / {n_seg} segments", m.rows())));
        }
        let mut counts = vec![0usize; n_seg];
        let mut y = Matrix::zeros(n_seg, m.cols());
        for (r, &s) in seg.iter().enumerate() {
            counts[s] += 1;
            for (o, v) in y.row_mut(s).iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        if mean {
            for (s, &c) in counts.iter().enumerate() {
                if c > 0 {
                    for o in y.row_mut(s) {
                        *o /= c as f64;
                    }
                }
            }
        }
        let grad = self.g(x);
        Ok(self.push(y, Op::Segment { x, seg: seg.to_vec(), counts, mean }, grad))
    }

    pub fn segment_sum(&mut self, x: Var, seg: &[usize], n_seg: usize) -> Result<Var> {
        self.segment(x, seg, n_seg, false)
    }

    pub fn segment_mean(&mut self, x: Var, seg: &[usize], n_seg: usize) -> Result<Var> {
        self.segment(x, seg, n_seg, true)
    }

    /// Row `i` of the result is row `idx[i]` of `x`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let m = self.value(x);
        if idx.iter().any(|&i| i >= m.rows()) {
            return Err(Error::Shape(format!("gather index out of {} rows", m.rows())));
        }
        let mut y = Matrix::zeros(idx.len(), m.cols());
        for (r, &i) in idx.iter().enumerate() {
            y.row_mut(r).copy_from_slice(m.row(i));
        }
        let grad = self.g(x);
        Ok(self.push(y, Op::Gather { x, idx: idx.to_vec() }, grad))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(Error::Shape(format!("concat_cols: {ra} vs {rb} rows")));
        }
        let mut y = Matrix::zeros(ra, ca + cb);
        for r in 0..ra {
            y.row_mut(r)[..ca].copy_from_slice(self.value(a).row(r));
            y.row_mut(r)[ca..].copy_from_slice(self.value(b).row(r));
        }
        let grad = self.g(a) || self.g(b);
        Ok(self.push(y, Op::ConcatCols(a, b), grad))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.shape(p).1);
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(Error::Shape("concat_rows: column mismatch".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let y = Matrix::new(rows, cols, data)?;
        let grad = parts.iter().any(|&p| self.g(p));
        Ok(self.push(y, Op::ConcatRows(parts.to_vec()), grad))
    }

    /// Log-softmax of an `n x 1` column within each segment.
    pub fn segment_log_softmax(&mut self, x: Var, seg: &[usize]) -> Result<Var> {
        let m = self.value(x);
        if m.cols() != 1 || seg.len() != m.rows() {
            return Err(Error::Shape("segment_log_softmax expects an n x 1 column".into()));
        }
        let n_seg = seg.iter().copied().max().map_or(0, |s| s + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (r, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(m.data()[r]);
        }
        let mut z = vec![0.0; n_seg];
        for (r, &s) in seg.iter().enumerate() {
            z[s] += (m.data()[r] - max[s]).exp();
        }
        let y = Matrix::column(seg.iter().enumerate().map(|(r, &s)| m.data()[r] - max[s] - z[s].ln()).collect());
        let grad = self.g(x);
        Ok(self.push(y, Op::SegmentLogSoftmax { x, seg: seg.to_vec() }, grad))
    }

    /// Gradients of the scalar `loss` with respect to every parameter
    /// loaded on this tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads = Gradients::default();
        if !self.g(loss) {
            return Ok(grads);
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        fn acc(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.grad {
                continue;
            }
            let Some(dy) = adj[i].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(*id, &dy),
                Op::Affine { x, w, b } => {
                    if self.g(*x) {
                        acc(&mut adj, *x, dy.matmul_t(self.value(*w)));
                    }
                    if self.g(*w) {
                        acc(&mut adj, *w, self.value(*x).t_matmul(&dy));
                    }
                    if self.g(*b) {
                        let mut db = Matrix::zeros(1, dy.cols());
                        for r in 0..dy.rows() {
                            for (o, v) in db.row_mut(0).iter_mut().zip(dy.row(r)) {
                                *o += v;
                            }
                        }
                        acc(&mut adj, *b, db);
                    }
                }
                Op::Silu(x) => {
                    let dx = self.value(*x).zip_map(&dy, |v, d| {
                        let s = sigmoid(v);
                        d * s * (1.0 + v * (1.0 - s))
                    });
                    acc(&mut adj, *x, dx);
                }
                Op::Add(a, b) => {
                    if self.g(*a) {
                        acc(&mut adj, *a, dy.clone());
                    }
                    if self.g(*b) {
                        acc(&mut adj, *b, dy);
                    }
                }
                Op::Sub(a, b) => {
                    if self.g(*a) {
                        acc(&mut adj, *a, dy.clone());
                    }
                    if self.g(*b) {
                        acc(&mut adj, *b, dy.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if self.g(*a) {
                        acc(&mut adj, *a, dy.zip_map(self.value(*b), |d, v| d * v));
                    }
                    if self.g(*b) {
                        acc(&mut adj, *b, dy.zip_map(self.value(*a), |d, v| d * v));
                    }
                }
                Op::Scale(a, k) => acc(&mut adj, *a, dy.map(|d| d * k)),
                Op::Square(a) => acc(&mut adj, *a, dy.zip_map(self.value(*a), |d, v| 2.0 * v * d)),
                Op::Sum(a) => {
                    let d = dy.item();
                    acc(&mut adj, *a, self.value(*a).map(|_| d));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.shape(*a);
                    let mut dx = Matrix::zeros(r, c);
                    for row in 0..r {
                        dx.row_mut(row).fill(dy.data()[row]);
                    }
                    acc(&mut adj, *a, dx);
                }
                Op::Segment { x, seg, counts, mean } => {
                    let (r, c) = self.shape(*x);
                    let mut dx = Matrix::zeros(r, c);
                    for (row, &s) in seg.iter().enumerate() {
                        let k = if *mean { 1.0 / counts[s] as f64 } else { 1.0 };
                        for (o, v) in dx.row_mut(row).iter_mut().zip(dy.row(s)) {
                            *o = v * k;
                        }
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::Gather { x, idx } => {
                    let (r, c) = self.shape(*x);
                    let mut dx = Matrix::zeros(r, c);
                    for (row, &i) in idx.iter().enumerate() {
                        for (o, v) in dx.row_mut(i).iter_mut().zip(dy.row(row)) {
                            *o += v;
                        }
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    let (r, cb) = self.shape(*b);
                    let mut da = Matrix::zeros(r, ca);
                    let mut db = Matrix::zeros(r, cb);
                    for row in 0..r {
                        da.row_mut(row).copy_from_slice(&dy.row(row)[..ca]);
                        db.row_mut(row).copy_from_slice(&dy.row(row)[ca..]);
                    }
                    if self.g(*a) {
                        acc(&mut adj, *a, da);
                    }
                    if self.g(*b) {
                        acc(&mut adj, *b, db);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        if self.g(p) {
                            let part = dy.data()[offset * c..(offset + r) * c].to_vec();
                            acc(&mut adj, p, Matrix::new(r, c, part)?);
                        }
                        offset += r;
                    }
                }
                Op::SegmentLogSoftmax { x, seg } => {
                    let y = &node.value;
                    let n_seg = seg.iter().copied().max().map_or(0, |s| s + 1);
                    let mut total = vec![0.0; n_seg];
                    for (r, &s) in seg.iter().enumerate() {
                        total[s] += dy.data()[r];
                    }
                    let dx = Matrix::column(
                        seg.iter()
                            .enumerate()
                            .map(|(r, &s)| dy.data()[r] - y.data()[r].exp() * total[s])
                            .collect(),
                    );
                    acc(&mut adj, *x, dx);
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{gradcheck, GradcheckConfig};
    use rand::SeedableRng;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn least_squares_gradient_closed_form() {
        // loss = 1/2 |W x - y|^2 with row-vector convention x W
        let mut store = ParamStore::new();
        let w = store.add("w", m(3, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6])).unwrap();
        let b = store.add("b", Matrix::zeros(1, 2)).unwrap();
        let x = [1.0, 2.0, -1.0];
        let y = [0.5, -0.5];
        let mut t = Tape::new();
        let xv = t.constant(m(1, 3, &x));
        let (wv, bv) = (t.param(&store, w), t.param(&store, b));
        let out = t.affine(xv, wv, bv).unwrap();
        let yv = t.constant(m(1, 2, &y));
        let r = t.sub(out, yv).unwrap();
        let sq = t.square(r);
        let s = t.sum(sq);
        let loss = t.scale(s, 0.5);
        let g = t.backward(loss).unwrap();
        let resid = t.value(r).data().to_vec();
        for i in 0..3 {
            for j in 0..2 {
                assert!((g.get(w).unwrap().get(i, j) - x[i] * resid[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_subgraph_has_no_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", m(1, 1, &[2.0])).unwrap();
        let unused = store.add("u", m(1, 1, &[3.0])).unwrap();
        let mut t = Tape::new();
        let c = t.constant(m(1, 1, &[4.0]));
        let c2 = t.square(c);
        let wv = t.param(&store, w);
        let p = t.mul(wv, c2).unwrap();
        let loss = t.sum(p);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().item(), 16.0);
        assert_eq!(g.value(unused, 0), 0.0);

        let mut t = Tape::new();
        let c = t.constant(m(1, 1, &[4.0]));
        let loss = t.square(c);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.value(w, 0), 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::zeros(2, 1));
        assert!(matches!(t.backward(c), Err(Error::NonScalarLoss { rows: 2, cols: 1 })));
    }

    #[test]
    fn log_softmax_rows_normalise() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::column(vec![1.0, 2.0, 3.0, -1.0, 0.5]));
        let y = t.segment_log_softmax(x, &[0, 0, 0, 1, 1]).unwrap();
        let v = t.value(y).data();
        let s0: f64 = v[..3].iter().map(|l| l.exp()).sum();
        let s1: f64 = v[3..].iter().map(|l| l.exp()).sum();
        assert!((s0 - 1.0).abs() < 1e-15 && (s1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn every_op_passes_gradcheck() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let w1 = store.add_glorot("w1", 3, 4, &mut rng).unwrap();
        let b1 = store.add_glorot("b1", 1, 4, &mut rng).unwrap();
        let w2 = store.add_glorot("w2", 8, 4, &mut rng).unwrap();
        let b2 = store.add_glorot("b2", 1, 4, &mut rng).unwrap();
        let z = store.add_glorot("z", 1, 1, &mut rng).unwrap();
        let x = Matrix::new(5, 3, (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let seg = [0, 0, 1, 1, 1];
        let f = |s: &ParamStore| -> Result<(Tape, Var)> {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let (w1, b1, w2, b2, z) = (t.param(s, w1), t.param(s, b1), t.param(s, w2), t.param(s, b2), t.param(s, z));
            let h = t.affine(xv, w1, b1)?;
            let h = t.silu(h);
            let ctx = t.segment_mean(h, &seg, 2)?;
            let back = t.gather(ctx, &seg)?;
            let cat = t.concat_cols(h, back)?;
            let o = t.affine(cat, w2, b2)?;
            let pooled = t.segment_sum(o, &seg, 2)?;
            let both = t.concat_rows(&[o, pooled])?;
            let prod = t.mul(both, both)?;
            let logits = t.sum_cols(prod);
            let lsm = t.segment_log_softmax(logits, &[0, 0, 1, 1, 1, 2, 2])?;
            let picks = t.gather(lsm, &[1, 3, 6])?;
            let zs = t.gather(z, &[0, 0, 0])?;
            let d = t.add(picks, zs)?;
            let d = t.sub(d, picks)?;
            let d = t.add(d, picks)?;
            let sq = t.square(d);
            let s = t.sum(sq);
            Ok((t, s))
        };
        let report = gradcheck(&store, f, &GradcheckConfig::default(), &mut rng).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
