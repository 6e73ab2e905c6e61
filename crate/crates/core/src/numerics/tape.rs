//! A small reverse-mode autodiff tape over vectors and matrices.
//!
//! Every forward op appends a node holding its value; [`Tape::backward`] walks the nodes in
//! reverse and accumulates vector-Jacobian products. Trainable tensors live in a
//! [`ParamStore`] and enter the tape either whole ([`Tape::param`]) or one row at a time
//! ([`Tape::param_row`]) so embedding tables only produce gradients for rows that were
//! actually read.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::layers::{closed_neighbourhoods, gcn_preactivation, sigmoid};
use super::tensor::{axpy, dot, matvec, matvec_t, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(t);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    ParamRow(ParamId, usize),
    MatVec(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Vec<Var>),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Dot(Var, Var),
    Stack(Vec<Var>),
    Pick(Var, usize),
    Softmax(Var),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Slice(Var, usize, usize),
    Gcn {
        h: Var,
        w: Var,
        hood: Arc<Vec<Vec<usize>>>,
        agg: Vec<f64>,
        pre: Vec<f64>,
    },
    Bce(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Probability clamp used by the binary cross-entropy op.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn vec_len(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn param_row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Var {
        let v = Tensor::vector(store.get(id).row(row).to_vec());
        self.push(v, Op::ParamRow(id, row))
    }

    /// `W x` for matrix `w` and vector `x`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let wt = self.value(w);
        if wt.shape().len() != 2 || wt.cols() != self.vec_len(x) {
            return Err(Error::dim(format!(
                "matvec: {:?} x {}",
                wt.shape(),
                self.vec_len(x)
            )));
        }
        let out = matvec(wt.data(), wt.rows(), wt.cols(), self.value(x).data());
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x)))
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.vec_len(a) != self.vec_len(b) {
            return Err(Error::dim(format!(
                "{what}: {} vs {}",
                self.vec_len(a),
                self.vec_len(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "add")?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Tensor::vector(out), Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "mul")?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Tensor::vector(out), Op::Mul(a, b)))
    }

    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::dim("sum of nothing"))?;
        let mut out = vec![0.0; self.vec_len(first)];
        for &x in xs {
            self.same_len(first, x, "sum")?;
            axpy(&mut out, 1.0, self.value(x).data());
        }
        Ok(self.push(Tensor::vector(out), Op::Sum(xs.to_vec())))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).data().iter().map(|v| v * k).collect();
        self.push(Tensor::vector(out), Op::Scale(x, k))
    }

    /// Scalar node `s` times vector `x`.
    pub fn scale_by(&mut self, s: Var, x: Var) -> Result<Var> {
        if self.vec_len(s) != 1 {
            return Err(Error::dim("scale_by expects a scalar"));
        }
        let k = self.scalar(s);
        let out = self.value(x).data().iter().map(|v| v * k).collect();
        Ok(self.push(Tensor::vector(out), Op::ScaleBy(s, x)))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.push(Tensor::vector(out), op)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let out: Vec<f64> = xs
            .iter()
            .flat_map(|&x| self.value(x).data().iter().copied())
            .collect();
        self.push(Tensor::vector(out), Op::Concat(xs.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "dot")?;
        let d = dot(self.value(a).data(), self.value(b).data());
        Ok(self.push(Tensor::scalar(d), Op::Dot(a, b)))
    }

    /// Gathers scalar nodes into a vector.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::EmptyAttention);
        }
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            if self.vec_len(x) != 1 {
                return Err(Error::dim("stack expects scalars"));
            }
            out.push(self.scalar(x));
        }
        Ok(self.push(Tensor::vector(out), Op::Stack(xs.to_vec())))
    }

    /// Element `i` of a vector as a scalar node.
    pub fn pick(&mut self, x: Var, i: usize) -> Var {
        let v = self.value(x).data()[i];
        self.push(Tensor::scalar(v), Op::Pick(x, i))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = super::layers::softmax(self.value(x).data())?;
        Ok(self.push(Tensor::vector(out), Op::Softmax(x)))
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::dim("stack_rows of nothing"))?;
        let cols = self.vec_len(first);
        let mut data = Vec::with_capacity(xs.len() * cols);
        for &x in xs {
            self.same_len(first, x, "stack_rows")?;
            data.extend_from_slice(self.value(x).data());
        }
        let t = Tensor::matrix(xs.len(), cols, data)?;
        Ok(self.push(t, Op::StackRows(xs.to_vec())))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Var {
        let r = self.value(m).row(i).to_vec();
        self.push(Tensor::vector(r), Op::Row(m, i))
    }

    /// Elements `start..start + len` of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vec_len(x);
        if len == 0 || start + len > n {
            return Err(Error::dim(format!("slice {start}..{} of {n}", start + len)));
        }
        let out = self.value(x).data()[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(out), Op::Slice(x, start, len)))
    }

    /// Graph convolution layer, see [`super::layers::gcn_layer`].
    pub fn gcn(&mut self, h: Var, adjacency: &[Vec<usize>], w: Var) -> Result<Var> {
        let (agg, pre) = gcn_preactivation(self.value(h), adjacency, self.value(w))?;
        let n = self.value(h).rows();
        let d_out = self.value(w).cols();
        let out = Tensor::matrix(n, d_out, pre.iter().map(|x| x.max(0.0)).collect())?;
        let hood = Arc::new(closed_neighbourhoods(adjacency));
        Ok(self.push(
            out,
            Op::Gcn {
                h,
                w,
                hood,
                agg,
                pre,
            },
        ))
    }

    /// Binary cross-entropy of probability node `p` against label `y`, with `p` clamped
    /// to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce(&mut self, p: Var, y: f64) -> Var {
        let loss = bce_value(self.scalar(p), y);
        self.push(Tensor::scalar(loss), Op::Bce(p, y))
    }

    /// Smallest `|x|` over all ReLU inputs; finite-difference checks are only meaningful
    /// when no input sits on the kink.
    pub fn min_relu_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for n in &self.nodes {
            match &n.op {
                Op::Relu(x) => {
                    for v in self.value(*x).data() {
                        m = m.min(v.abs());
                    }
                }
                Op::Gcn { pre, .. } => {
                    for v in pre {
                        m = m.min(v.abs());
                    }
                }
                _ => {}
            }
        }
        m
    }

    /// Back-propagates `seed` (shaped like `out`) through the tape.
    pub fn backward(&self, out: Var, seed: &[f64]) -> Result<Grads> {
        if seed.len() != self.vec_len(out) {
            return Err(Error::dim(format!(
                "seed has {} values, output has {}",
                seed.len(),
                self.vec_len(out)
            )));
        }
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        g[out.0] = Some(seed.to_vec());

        fn acc(g: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
            g[v.0].get_or_insert_with(|| vec![0.0; n])
        }

        for i in (0..=out.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) | Op::ParamRow(..) => {
                    g[i] = Some(dy);
                    continue;
                }
                Op::MatVec(w, x) => {
                    let wt = self.value(*w);
                    let (r, c) = (wt.rows(), wt.cols());
                    let xv = self.value(*x).data();
                    let dx = matvec_t(wt.data(), r, c, &dy);
                    let dw = acc(&mut g, *w, r * c);
                    for (row, d) in dw.chunks_exact_mut(c).zip(&dy) {
                        axpy(row, *d, xv);
                    }
                    axpy(acc(&mut g, *x, c), 1.0, &dx);
                }
                Op::Add(a, b) => {
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &dy);
                    axpy(acc(&mut g, *b, dy.len()), 1.0, &dy);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let da: Vec<f64> = dy.iter().zip(bv).map(|(d, y)| d * y).collect();
                    let db: Vec<f64> = dy.iter().zip(av).map(|(d, x)| d * x).collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &da);
                    axpy(acc(&mut g, *b, dy.len()), 1.0, &db);
                }
                Op::Sum(xs) => {
                    for x in xs {
                        axpy(acc(&mut g, *x, dy.len()), 1.0, &dy);
                    }
                }
                Op::Scale(x, k) => axpy(acc(&mut g, *x, dy.len()), *k, &dy),
                Op::ScaleBy(s, x) => {
                    let k = self.scalar(*s);
                    let ds = dot(&dy, self.value(*x).data());
                    acc(&mut g, *s, 1)[0] += ds;
                    axpy(acc(&mut g, *x, dy.len()), k, &dy);
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    let dx: Vec<f64> = dy.iter().zip(y).map(|(d, s)| d * s * (1.0 - s)).collect();
                    axpy(acc(&mut g, *x, dy.len()), 1.0, &dx);
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    let dx: Vec<f64> = dy.iter().zip(y).map(|(d, t)| d * (1.0 - t * t)).collect();
                    axpy(acc(&mut g, *x, dy.len()), 1.0, &dx);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    let dx: Vec<f64> = dy
                        .iter()
                        .zip(xv)
                        .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                        .collect();
                    axpy(acc(&mut g, *x, dy.len()), 1.0, &dx);
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for x in xs {
                        let n = self.vec_len(*x);
                        axpy(acc(&mut g, *x, n), 1.0, &dy[off..off + n]);
                        off += n;
                    }
                }
                Op::Dot(a, b) => {
                    let d = dy[0];
                    let n = self.vec_len(*a);
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    axpy(acc(&mut g, *a, n), d, bv);
                    axpy(acc(&mut g, *b, n), d, av);
                }
                Op::Stack(xs) => {
                    for (x, d) in xs.iter().zip(&dy) {
                        acc(&mut g, *x, 1)[0] += d;
                    }
                }
                Op::Pick(x, j) => {
                    let n = self.vec_len(*x);
                    acc(&mut g, *x, n)[*j] += dy[0];
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let inner = dot(&dy, y);
                    let dx: Vec<f64> = y.iter().zip(&dy).map(|(yi, di)| yi * (di - inner)).collect();
                    axpy(acc(&mut g, *x, dy.len()), 1.0, &dx);
                }
                Op::StackRows(xs) => {
                    let c = node.value.cols();
                    for (r, x) in xs.iter().enumerate() {
                        axpy(acc(&mut g, *x, c), 1.0, &dy[r * c..(r + 1) * c]);
                    }
                }
                Op::Row(m, r) => {
                    let mt = self.value(*m);
                    let c = mt.cols();
                    let total = mt.len();
                    axpy(&mut acc(&mut g, *m, total)[r * c..(r + 1) * c], 1.0, &dy);
                }
                Op::Slice(x, start, len) => {
                    let n = self.vec_len(*x);
                    axpy(&mut acc(&mut g, *x, n)[*start..start + len], 1.0, &dy);
                }
                Op::Gcn {
                    h,
                    w,
                    hood,
                    agg,
                    pre,
                } => {
                    let ht = self.value(*h);
                    let wt = self.value(*w);
                    let (n, d_in, d_out) = (ht.rows(), ht.cols(), wt.cols());
                    let dp: Vec<f64> = dy
                        .iter()
                        .zip(pre)
                        .map(|(d, p)| if *p > 0.0 { *d } else { 0.0 })
                        .collect();
                    {
                        let dw = acc(&mut g, *w, d_in * d_out);
                        for v in 0..n {
                            let a = &agg[v * d_in..(v + 1) * d_in];
                            let dpv = &dp[v * d_out..(v + 1) * d_out];
                            for (k, ak) in a.iter().enumerate() {
                                axpy(&mut dw[k * d_out..(k + 1) * d_out], *ak, dpv);
                            }
                        }
                    }
                    let dh = acc(&mut g, *h, n * d_in);
                    for (v, ns) in hood.iter().enumerate() {
                        let dagg = matvec(wt.data(), d_in, d_out, &dp[v * d_out..(v + 1) * d_out]);
                        let inv = 1.0 / ns.len() as f64;
                        for &u in ns {
                            axpy(&mut dh[u * d_in..(u + 1) * d_in], inv, &dagg);
                        }
                    }
                }
                Op::Bce(p, y) => {
                    let pv = self.scalar(*p).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    let d = (pv - y) / (pv * (1.0 - pv));
                    acc(&mut g, *p, 1)[0] += dy[0] * d;
                }
            }
        }
        Ok(Grads { grads: g })
    }

    /// Sparse parameter gradients: whole tensors for [`Tape::param`] leaves and single rows
    /// for [`Tape::param_row`] leaves.
    pub fn param_grads(&self, grads: &Grads) -> ParamGrads {
        let mut pg = ParamGrads::default();
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(gv) = &grads.grads[i] else { continue };
            match node.op {
                Op::Param(id) => pg.add_dense(id, gv),
                Op::ParamRow(id, r) => pg.add_row(id, r, gv),
                _ => {}
            }
        }
        pg
    }
}

pub fn bce_value(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Per-node gradients after a backward pass.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient with respect to `v`; `None` when `v` does not influence the output.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrads {
    pub dense: BTreeMap<ParamId, Vec<f64>>,
    pub rows: BTreeMap<(ParamId, usize), Vec<f64>>,
}

impl ParamGrads {
    fn add_dense(&mut self, id: ParamId, g: &[f64]) {
        let e = self.dense.entry(id).or_insert_with(|| vec![0.0; g.len()]);
        axpy(e, 1.0, g);
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        let e = self.rows.entry((id, row)).or_insert_with(|| vec![0.0; g.len()]);
        axpy(e, 1.0, g);
    }

    /// `acc[p] += k · grad[p]` for every parameter touched.
    pub fn accumulate_into(&self, acc: &mut [Tensor], k: f64) {
        for (id, g) in &self.dense {
            axpy(acc[id.0].data_mut(), k, g);
        }
        for ((id, r), g) in &self.rows {
            axpy(acc[id.0].row_mut(*r), k, g);
        }
    }

    pub fn to_dense(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut acc = store.zeros_like();
        self.accumulate_into(&mut acc, 1.0);
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_grad() {
        let mut t = Tape::new();
        let w = t.input(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let x = t.input(Tensor::vector(vec![1.0, -1.0, 2.0]));
        let y = t.matvec(w, x).unwrap();
        assert_eq!(t.value(y).data(), &[5.0, 11.0]);
        let g = t.backward(y, &[1.0, 2.0]).unwrap();
        assert_eq!(g.of(x).unwrap(), &[9.0, 12.0, 15.0]);
        assert_eq!(g.of(w).unwrap(), &[1.0, -1.0, 2.0, 2.0, -2.0, 4.0]);
    }

    #[test]
    fn softmax_grad_sums_to_zero() {
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![0.1, -0.4, 2.0]));
        let y = t.softmax(x).unwrap();
        let g = t.backward(y, &[0.3, 1.0, -2.0]).unwrap();
        let s: f64 = g.of(x).unwrap().iter().sum();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn unused_input_has_no_grad() {
        let mut t = Tape::new();
        let a = t.input(Tensor::vector(vec![1.0]));
        let b = t.input(Tensor::vector(vec![2.0]));
        let y = t.sigmoid(a);
        let g = t.backward(y, &[1.0]).unwrap();
        assert!(g.of(b).is_none());
        assert!((g.of(a).unwrap()[0] - sigmoid(1.0) * (1.0 - sigmoid(1.0))).abs() < 1e-15);
    }

    #[test]
    fn param_rows_are_sparse() {
        let mut store = ParamStore::new();
        let id = store
            .insert("emb", Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let mut t = Tape::new();
        let r1 = t.param_row(&store, id, 1);
        let r1b = t.param_row(&store, id, 1);
        let s = t.add(r1, r1b).unwrap();
        let g = t.backward(s, &[1.0, 1.0]).unwrap();
        let pg = t.param_grads(&g);
        assert_eq!(pg.rows.len(), 1);
        let dense = pg.to_dense(&store);
        assert_eq!(dense[0].data(), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn slice_grad_scatters() {
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let y = t.slice(x, 1, 2).unwrap();
        assert_eq!(t.value(y).data(), &[2.0, 3.0]);
        let g = t.backward(y, &[5.0, 7.0]).unwrap();
        assert_eq!(g.of(x).unwrap(), &[0.0, 5.0, 7.0, 0.0]);
        assert!(t.slice(x, 3, 2).is_err());
    }

    #[test]
    fn bce_value_examples() {
        assert!((bce_value(0.5, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_value(1.0 - 1e-15, 1.0) < 1e-11);
        assert!(bce_value(0.0, 1.0).is_finite());
    }
}
