//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! A [`Graph`] records every operation eagerly: each node stores its forward
//! value, so the same code path serves inference (values only) and training
//! (values plus a [`Graph::backward`] sweep). Nodes that do not depend on any
//! [`Graph::param`] are marked untracked and skipped during backward.

use std::sync::Arc;

use crate::sparse::CsrMatrix;
use crate::tensor::{sigmoid, Matrix};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    SpMm(Arc<CsrMatrix>, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Softmax(Var),
    NormalizeRows(Var),
    GatherRows(Var, Vec<usize>),
    RowNorms(Var),
    FrobNorm(Var),
    Sum(Var),
    PairDot(Var, Var, Arc<Vec<(usize, usize)>>),
}

struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every tracked node.
pub struct Gradients(Vec<Option<Matrix>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.0[v.0].take()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(v, Op::MatMulNt(a, b), &[a, b])
    }

    /// Sparse constant times dense node.
    pub fn spmm(&mut self, s: &Arc<CsrMatrix>, b: Var) -> Var {
        let v = s.spmm(self.value(b));
        self.push(v, Op::SpMm(Arc::clone(s), b), &[b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).hadamard(self.value(b));
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 × c` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert_eq!(bv.rows(), 1, "bias must be a single row");
        assert_eq!(av.cols(), bv.cols(), "bias width mismatch");
        let mut v = av.clone();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, bias), &[a, bias])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&mats);
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice_cols(start, end);
        self.push(v, Op::SliceCols(a, start), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_rows(&mats);
        self.push(v, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice_rows(start, end);
        self.push(v, Op::SliceRows(a, start), &[a])
    }

    /// Row-wise softmax. With a mask, entries outside it get probability 0
    /// and the softmax is taken over the masked entries only; a row with an
    /// empty mask becomes all zeros.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let x = self.value(a);
        if let Some(m) = mask {
            assert_eq!(m.len(), x.len(), "softmax mask size mismatch");
        }
        let mut v = Matrix::zeros(x.rows(), x.cols());
        let cols = x.cols();
        for i in 0..x.rows() {
            let keep = |j: usize| mask.is_none_or(|m| m[i * cols + j]);
            let row = x.row(i);
            let max = (0..cols)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let out = v.row_mut(i);
            let mut total = 0.0;
            for j in 0..cols {
                if keep(j) {
                    out[j] = (row[j] - max).exp();
                    total += out[j];
                }
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        self.push(v, Op::Softmax(a), &[a])
    }

    /// Scales every row to unit Euclidean norm; zero rows stay zero.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for (i, n) in x.row_norms().into_iter().enumerate() {
            if n > 0.0 {
                v.row_mut(i).iter_mut().for_each(|e| *e /= n);
            }
        }
        self.push(v, Op::NormalizeRows(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut v = Matrix::zeros(idx.len(), x.cols());
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).copy_from_slice(x.row(i));
        }
        self.push(v, Op::GatherRows(a, idx), &[a])
    }

    /// Euclidean norm of each row, as an `n × 1` column.
    pub fn row_norms(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Matrix::from_vec(x.rows(), 1, x.row_norms());
        self.push(v, Op::RowNorms(a), &[a])
    }

    pub fn frobenius_norm(&mut self, a: Var) -> Var {
        let v = Matrix::from_vec(1, 1, vec![self.value(a).frobenius_norm()]);
        self.push(v, Op::FrobNorm(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::from_vec(1, 1, vec![self.value(a).sum()]);
        self.push(v, Op::Sum(a), &[a])
    }

    /// `out[k] = a[i_k] · b[j_k]` for each requested pair, as a column.
    pub fn pair_dot(&mut self, a: Var, b: Var, pairs: Arc<Vec<(usize, usize)>>) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "pair_dot width mismatch");
        let data = pairs
            .iter()
            .map(|&(i, j)| av.row(i).iter().zip(bv.row(j)).map(|(x, y)| x * y).sum())
            .collect();
        let v = Matrix::from_vec(pairs.len(), 1, data);
        self.push(v, Op::PairDot(a, b, pairs), &[a, b])
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.data()[0]
    }

    /// Reverse sweep from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].tracked {
            return Gradients(grads);
        }
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Gradients(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, gy: &Matrix, grads: &mut [Option<Matrix>]) {
        let y = &node.value;
        match &node.op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                if self.is_tracked(*a) {
                    self.accumulate(grads, *a, gy.matmul_nt(self.value(*b)));
                }
                if self.is_tracked(*b) {
                    self.accumulate(grads, *b, self.value(*a).matmul_tn(gy));
                }
            }
            Op::MatMulNt(a, b) => {
                if self.is_tracked(*a) {
                    self.accumulate(grads, *a, gy.matmul(self.value(*b)));
                }
                if self.is_tracked(*b) {
                    self.accumulate(grads, *b, gy.matmul_tn(self.value(*a)));
                }
            }
            Op::SpMm(s, b) => self.accumulate(grads, *b, s.spmm_t(gy)),
            Op::Transpose(a) => self.accumulate(grads, *a, gy.transpose()),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.is_tracked(*a) {
                    self.accumulate(grads, *a, gy.hadamard(self.value(*b)));
                }
                if self.is_tracked(*b) {
                    self.accumulate(grads, *b, gy.hadamard(self.value(*a)));
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, gy.clone());
                if self.is_tracked(*bias) {
                    let mut gb = Matrix::zeros(1, gy.cols());
                    for i in 0..gy.rows() {
                        for (s, g) in gb.data_mut().iter_mut().zip(gy.row(i)) {
                            *s += g;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, gy.scale(*s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, gy.clone()),
            Op::Relu(a) => {
                let g = gy.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *a, g);
            }
            Op::Tanh(a) => self.accumulate(grads, *a, gy.zip_map(y, |g, t| g * (1.0 - t * t))),
            Op::Sigmoid(a) => self.accumulate(grads, *a, gy.zip_map(y, |g, s| g * s * (1.0 - s))),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.is_tracked(p) {
                        self.accumulate(grads, p, gy.slice_cols(start, start + w));
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut g = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    g.row_mut(i)[*start..*start + gy.cols()].copy_from_slice(gy.row(i));
                }
                self.accumulate(grads, *a, g);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if self.is_tracked(p) {
                        self.accumulate(grads, p, gy.slice_rows(start, start + h));
                    }
                    start += h;
                }
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let mut g = Matrix::zeros(x.rows(), x.cols());
                let c = x.cols();
                g.data_mut()[start * c..(start + gy.rows()) * c].copy_from_slice(gy.data());
                self.accumulate(grads, *a, g);
            }
            Op::Softmax(a) => {
                let mut g = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), gy.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((o, p), q) in g.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::NormalizeRows(a) => {
                let x = self.value(*a);
                let norms = x.row_norms();
                let mut g = Matrix::zeros(x.rows(), x.cols());
                for (i, &n) in norms.iter().enumerate() {
                    if n == 0.0 {
                        continue;
                    }
                    let (yr, gr) = (y.row(i), gy.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((o, p), q) in g.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = (q - p * dot) / n;
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let mut g = Matrix::zeros(x.rows(), x.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, q) in g.row_mut(i).iter_mut().zip(gy.row(r)) {
                        *o += q;
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::RowNorms(a) => {
                let x = self.value(*a);
                let mut g = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let n = y.get(i, 0);
                    if n == 0.0 {
                        continue;
                    }
                    let s = gy.get(i, 0) / n;
                    for (o, v) in g.row_mut(i).iter_mut().zip(x.row(i)) {
                        *o = s * v;
                    }
                }
                self.accumulate(grads, *a, g);
            }
            Op::FrobNorm(a) => {
                let n = y.data()[0];
                let x = self.value(*a);
                let g = if n == 0.0 {
                    Matrix::zeros(x.rows(), x.cols())
                } else {
                    x.scale(gy.data()[0] / n)
                };
                self.accumulate(grads, *a, g);
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), gy.data()[0]));
            }
            Op::PairDot(a, b, pairs) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let track_a = self.is_tracked(*a);
                let track_b = self.is_tracked(*b);
                let mut ga = Matrix::zeros(av.rows(), av.cols());
                let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let s = gy.get(k, 0);
                    if s == 0.0 {
                        continue;
                    }
                    if track_a {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(bv.row(j)) {
                            *o += s * v;
                        }
                    }
                    if track_b {
                        for (o, v) in gb.row_mut(j).iter_mut().zip(av.row(i)) {
                            *o += s * v;
                        }
                    }
                }
                if track_a {
                    self.accumulate(grads, *a, ga);
                }
                if track_b {
                    self.accumulate(grads, *b, gb);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of `f` around `x`.
    fn numeric_grad(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[k] += h;
            let mut m = x.clone();
            m.data_mut()[k] -= h;
            g.data_mut()[k] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn check(x: Matrix, build: &dyn Fn(&mut Graph, Var) -> Var) {
        let eval = |m: &Matrix| {
            let mut g = Graph::new();
            let v = g.param(m.clone());
            let out = build(&mut g, v);
            g.scalar(out)
        };
        let mut g = Graph::new();
        let v = g.param(x.clone());
        let out = build(&mut g, v);
        let analytic = g.backward(out).get(v).cloned().expect("gradient");
        let numeric = numeric_grad(&x, &eval);
        let err = analytic.max_abs_diff(&numeric);
        assert!(err < 1e-6, "gradient mismatch {err}: {analytic:?} vs {numeric:?}");
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Small deterministic pseudo-random values away from ReLU kinks.
        let mut s = seed;
        Matrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn matmul_family_gradients() {
        let b = sample(3, 4, 7);
        check(sample(2, 3, 1), &|g, x| {
            let c = g.constant(b.clone());
            let y = g.matmul(x, c);
            let t = g.tanh(y);
            g.sum(t)
        });
        let c2 = sample(5, 3, 9);
        check(sample(2, 3, 2), &|g, x| {
            let c = g.constant(c2.clone());
            let y = g.matmul_nt(x, c);
            let y2 = g.matmul_nt(c, x);
            let t = g.transpose(y2);
            let s = g.mul(y, t);
            g.sum(s)
        });
    }

    #[test]
    fn elementwise_and_structural_gradients() {
        let bias = sample(1, 4, 11);
        check(sample(3, 4, 3), &|g, x| {
            let b = g.param(bias.clone());
            let y = g.add_row(x, b);
            let s = g.sigmoid(y);
            let r = g.relu(x);
            let l = g.slice_cols(s, 1, 3);
            let rr = g.slice_cols(r, 0, 2);
            let c = g.concat_cols(&[l, rr]);
            let top = g.slice_rows(c, 0, 2);
            let all = g.concat_rows(&[top, c]);
            let sc = g.scale(all, 0.7);
            let o = g.add_scalar(sc, 0.3);
            let sq = g.mul(o, o);
            g.sum(sq)
        });
    }

    #[test]
    fn softmax_normalize_and_norm_gradients() {
        let mask = vec![true, false, true, true, true, true, false, true, true, true, false, true];
        check(sample(3, 4, 5), &|g, x| {
            let s = g.softmax_rows(x, Some(&mask));
            let w = g.softmax_rows(x, None);
            let p = g.mul(s, w);
            let n = g.normalize_rows(x);
            let q = g.add(p, n);
            let rn = g.row_norms(q);
            let f = g.frobenius_norm(x);
            let a = g.sum(rn);
            g.add(a, f)
        });
    }

    #[test]
    fn gather_and_pair_dot_gradients() {
        let pairs = Arc::new(vec![(0, 1), (2, 2), (1, 0), (0, 1)]);
        check(sample(3, 2, 8), &|g, x| {
            let gathered = g.gather_rows(x, vec![2, 0, 2]);
            let n = g.row_norms(gathered);
            let d = g.pair_dot(x, x, Arc::clone(&pairs));
            let sd = g.sigmoid(d);
            let a = g.sum(n);
            let b = g.sum(sd);
            g.add(a, b)
        });
    }

    #[test]
    fn spmm_gradient() {
        let s = Arc::new(CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 0.5), (0, 2, 0.25), (1, 1, 1.0), (2, 0, -0.5)],
        ));
        check(sample(3, 2, 4), &|g, x| {
            let y = g.spmm(&s, x);
            let t = g.tanh(y);
            g.sum(t)
        });
    }

    #[test]
    fn norms_have_zero_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Matrix::zeros(2, 3));
        let f = g.frobenius_norm(x);
        let r = g.row_norms(x);
        let s = g.sum(r);
        let t = g.add(f, s);
        let grads = g.backward(t);
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Matrix::filled(2, 2, 1.0));
        let p = g.param(Matrix::filled(2, 2, 2.0));
        let m = g.mul(c, p);
        let s = g.sum(m);
        let grads = g.backward(s);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap(), &Matrix::filled(2, 2, 1.0));
    }
}
