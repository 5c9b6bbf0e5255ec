//! Wengert-list reverse-mode differentiation over two-dimensional values.
//!
//! Every value on the tape is a `rows x cols` matrix (vectors are single
//! rows, scalars are `1 x 1`). Nodes only reference earlier nodes, so the
//! node order is already a topological order and the backward sweep is a
//! single reverse pass.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ModelParams;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    /// Equal shapes, or either side `1 x 1`.
    Add(Var, Var),
    Mul(Var, Var),
    Affine(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    PosPart(Var),
    AddRow(Var, Var),
    /// Constant offset added in the forward pass; identity backward.
    AddConst(Var),
    SoftmaxRows(Var),
    Dropout(Var, Vec<T>),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sum(Var),
    SoftmaxXent(Var, usize, Vec<T>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<String, Var>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

/// `out[m x n] += a[m x k] * b[k x n]`
fn gemm_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m x k] += d[m x n] * b[k x n]^T`
fn gemm_nt_acc<T: Real>(d: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &d[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in drow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out[k x n] += a[m x k]^T * d[m x n]`
fn gemm_tn_acc<T: Real>(a: &[T], d: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &d[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &dv) in orow.iter_mut().zip(drow) {
                *o += aip * dv;
            }
        }
    }
}

pub(crate) fn matmul_plain<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    gemm_acc(a, b, &mut out, m, k, n);
    out
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad
            }
            Op::ConcatRows(vs) | Op::ConcatCols(vs) => vs.iter().any(|v| self.nodes[v.0].needs_grad),
            Op::Transpose(a)
            | Op::Affine(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::PosPart(a)
            | Op::AddConst(a)
            | Op::SoftmaxRows(a)
            | Op::Dropout(a, _)
            | Op::GatherRows(a, _)
            | Op::SliceRows(a, _)
            | Op::SliceCols(a, _)
            | Op::Sum(a)
            | Op::SoftmaxXent(a, _, _) => self.nodes[a.0].needs_grad,
        };
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. `requires_grad` leaves receive gradients on
    /// [`Tape::backward`].
    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<T>, requires_grad: bool) -> Result<Var> {
        if rows == 0 || cols == 0 || rows * cols != values.len() {
            return Err(Error::Shape(format!(
                "leaf {rows}x{cols} with {} values",
                values.len()
            )));
        }
        let v = self.push(rows, cols, values, Op::Leaf);
        self.nodes[v.0].needs_grad = requires_grad;
        Ok(v)
    }

    pub fn tensor(&mut self, t: &Tensor<T>) -> Var {
        let (r, c) = t.as_matrix_dims();
        self.leaf(r, c, t.values().to_vec(), t.requires_grad())
            .expect("tensor invariants hold")
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<T>) -> Result<Var> {
        self.leaf(rows, cols, values, false)
    }

    pub fn scalar(&mut self, x: T) -> Var {
        self.push(1, 1, vec![x], Op::Leaf)
    }

    /// Binds the named parameter as a trainable leaf, once per tape.
    pub fn param(&mut self, params: &ModelParams<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
        let (r, c) = t.as_matrix_dims();
        let v = self.leaf(r, c, t.values().to_vec(), true)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let (r, c) = self.shape(v);
        Tensor::matrix(r, c, self.value(v).to_vec()).expect("tape shapes are valid")
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // ----- operations -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let out = matmul_plain(self.value(a), self.value(b), m, k, n);
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push(c, r, out, Op::Transpose(a))
    }

    fn broadcast_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb || sb == (1, 1) {
            Ok(sa)
        } else if sa == (1, 1) {
            Ok(sb)
        } else {
            Err(shape_err(what, sa, sb))
        }
    }

    fn zip_broadcast(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        let va = self.value(a);
        let vb = self.value(b);
        match (va.len(), vb.len()) {
            (x, y) if x == y => va.iter().zip(vb).map(|(&p, &q)| f(p, q)).collect(),
            (_, 1) => va.iter().map(|&p| f(p, vb[0])).collect(),
            _ => vb.iter().map(|&q| f(va[0], q)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.broadcast_shape(a, b, "add")?;
        let out = self.zip_broadcast(a, b, |p, q| p + q);
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.broadcast_shape(a, b, "mul")?;
        let out = self.zip_broadcast(a, b, |p, q| p * q);
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| scale * x + shift).collect();
        self.push(r, c, out, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.affine(a, c, T::zero())
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::zero())
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, T::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| T::one() / (T::one() + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    /// `max(x, 0)` with derivative 1 on `x >= 0` (so the branch stays
    /// trainable from exactly zero).
    pub fn pos_part(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::PosPart(a))
    }

    /// Adds a `1 x cols` bias to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(bias) != (1, c) {
            return Err(shape_err("add_row", (r, c), self.shape(bias)));
        }
        let b = self.value(bias);
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.push(r, c, out, Op::AddRow(a, bias)))
    }

    pub fn add_const(&mut self, a: Var, offset: &[T]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if offset.len() != r * c {
            return Err(Error::Shape(format!(
                "add_const: {r}x{c} vs {} offsets",
                offset.len()
            )));
        }
        let out = self.value(a).iter().zip(offset).map(|(&x, &y)| x + y).collect();
        Ok(self.push(r, c, out, Op::AddConst(a)))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(r, c, out, Op::SoftmaxRows(a))
    }

    /// Inverted dropout. In eval mode (`train == false`) this is the
    /// identity and returns `a` itself; the train-mode mask is a pure
    /// function of `seed`.
    pub fn dropout(&mut self, a: Var, rate: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1]")));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.shape(a);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = if rate < 1.0 { T::lit(1.0 / (1.0 - rate)) } else { T::zero() };
        let mask: Vec<T> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok(self.push(r, c, out, Op::Dropout(a, mask)))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(table);
        if ids.is_empty() {
            return Err(Error::EmptySequence("gather_rows"));
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::Index { index: id, len: r });
            }
            out.extend_from_slice(&src[id * c..(id + 1) * c]);
        }
        Ok(self.push(ids.len(), c, out, Op::GatherRows(table, ids.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if len == 0 || start + len > r {
            return Err(Error::Shape(format!("slice_rows {start}..{} of {r} rows", start + len)));
        }
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        Ok(self.push(len, c, out, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if len == 0 || start + len > c {
            return Err(Error::Shape(format!("slice_cols {start}..{} of {c} cols", start + len)));
        }
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(r, len, out, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptySequence("concat_rows"))?;
        let c = self.shape(*first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pc != c {
                return Err(shape_err("concat_rows", (rows, c), (pr, pc)));
            }
            rows += pr;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, c, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptySequence("concat_cols"))?;
        let r = self.shape(*first).0;
        let mut cols = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pr != r {
                return Err(shape_err("concat_cols", (r, cols), (pr, pc)));
            }
            cols += pc;
        }
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(r, cols, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// `-log softmax(row)[target]` for a single-row input.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if r != 1 {
            return Err(Error::Shape(format!("softmax_xent expects one row, got {r}")));
        }
        if target >= c {
            return Err(Error::Index { index: target, len: c });
        }
        let x = self.value(logits);
        let max = x.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let loss = lse - x[target];
        let probs: Vec<T> = x.iter().map(|&v| (v - lse).exp()).collect();
        Ok(self.push(1, 1, vec![loss], Op::SoftmaxXent(logits, target, probs)))
    }

    // ----- backward ---------------------------------------------------

    /// Reverse sweep from a scalar output. Afterwards every trainable leaf
    /// that is reachable (or not) has a gradient; unused ones are zero.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        if self.shape(out) != (1, 1) {
            let (r, c) = self.shape(out);
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {r}x{c}"
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[out.0] = Some(vec![T::one()]);

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.needs_grad && grads[idx].is_none() {
                grads[idx] = Some(vec![T::zero(); node.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].rows, nodes[a.0].cols);
                let nn = nodes[b.0].cols;
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |ga| gemm_nt_acc(g, vb, ga, m, k, nn));
                acc(*b, &mut |gb| gemm_tn_acc(va, g, gb, m, k, nn));
            }
            Op::Transpose(a) => {
                let (r, c) = (node.rows, node.cols);
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |gv| {
                        if gv.len() == g.len() {
                            gv.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                        } else {
                            gv[0] += g.iter().copied().sum();
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    let ov = &nodes[other.0].value;
                    acc(v, &mut |gv| {
                        if gv.len() == g.len() {
                            if ov.len() == g.len() {
                                for ((x, &y), &o) in gv.iter_mut().zip(g).zip(ov) {
                                    *x += y * o;
                                }
                            } else {
                                gv.iter_mut().zip(g).for_each(|(x, &y)| *x += y * ov[0]);
                            }
                        } else {
                            gv[0] += g.iter().zip(ov).map(|(&y, &o)| y * o).sum();
                        }
                    });
                }
            }
            Op::Affine(a, s) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += *s * y)),
            Op::Tanh(a) => acc(*a, &mut |ga| {
                for ((x, &y), &o) in ga.iter_mut().zip(g).zip(&node.value) {
                    *x += y * (T::one() - o * o);
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for ((x, &y), &o) in ga.iter_mut().zip(g).zip(&node.value) {
                    *x += y * o * (T::one() - o);
                }
            }),
            Op::Relu(a) | Op::PosPart(a) => {
                let strict = matches!(node.op, Op::Relu(_));
                let input = &nodes[a.0].value;
                acc(*a, &mut |ga| {
                    for ((x, &y), &i) in ga.iter_mut().zip(g).zip(input) {
                        let on = if strict { i > T::zero() } else { i >= T::zero() };
                        if on {
                            *x += y;
                        }
                    }
                });
            }
            Op::AddRow(a, b) => {
                let c = node.cols;
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
                acc(*b, &mut |gb| {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                    }
                });
            }
            Op::AddConst(a) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y)),
            Op::SoftmaxRows(a) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    for ((gr, yr), orow) in g.chunks(c).zip(node.value.chunks(c)).zip(ga.chunks_mut(c)) {
                        let dot: T = gr.iter().zip(yr).map(|(&p, &q)| p * q).sum();
                        for ((o, &gi), &yi) in orow.iter_mut().zip(gr).zip(yr) {
                            *o += yi * (gi - dot);
                        }
                    }
                });
            }
            Op::Dropout(a, mask) => acc(*a, &mut |ga| {
                for ((x, &y), &m) in ga.iter_mut().zip(g).zip(mask) {
                    *x += y * m;
                }
            }),
            Op::GatherRows(t, ids) => {
                let c = node.cols;
                acc(*t, &mut |gt| {
                    for (i, &id) in ids.iter().enumerate() {
                        let src = &g[i * c..(i + 1) * c];
                        gt[id * c..(id + 1) * c]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, &y)| *x += y);
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    ga[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(x, &y)| *x += y);
                });
            }
            Op::SliceCols(a, start) => {
                let (len, src_cols) = (node.cols, nodes[a.0].cols);
                acc(*a, &mut |ga| {
                    for (grow, arow) in g.chunks(len).zip(ga.chunks_mut(src_cols)) {
                        arow[*start..start + len]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(x, &y)| *x += y);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    let src = &g[offset..offset + len];
                    acc(p, &mut |gp| gp.iter_mut().zip(src).for_each(|(x, &y)| *x += y));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.cols;
                let mut col = 0;
                for &p in parts {
                    let pc = nodes[p.0].cols;
                    acc(p, &mut |gp| {
                        for (grow, prow) in g.chunks(total).zip(gp.chunks_mut(pc)) {
                            prow.iter_mut()
                                .zip(&grow[col..col + pc])
                                .for_each(|(x, &y)| *x += y);
                        }
                    });
                    col += pc;
                }
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::SoftmaxXent(a, target, probs) => acc(*a, &mut |ga| {
                for (j, (x, &p)) in ga.iter_mut().zip(probs).enumerate() {
                    let onehot = if j == *target { T::one() } else { T::zero() };
                    *x += g[0] * (p - onehot);
                }
            }),
        }
    }

    /// Gradients of every parameter bound through [`Tape::param`], keyed by
    /// name. Valid after [`Tape::backward`].
    pub fn param_grads(&self) -> BTreeMap<String, Vec<T>> {
        self.params
            .iter()
            .map(|(name, &v)| {
                let g = self
                    .grad(v)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); self.value(v).len()]);
                (name.clone(), g)
            })
            .collect()
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x = *x / total;
    }
}
