//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation pushes one
//! node holding its forward value, so insertion order is a topological order
//! and [`Graph::backward`] simply walks the list in reverse.
//!
//! Leaves created with [`Graph::param`] accumulate gradients across
//! `backward` calls until [`Graph::zero_grads`] is called. Leaves created with
//! [`Graph::constant`] never receive gradients.
//!
//! ```
//! use contkd_core::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![3.0]));
//! let y = g.sum_sq(x);
//! g.backward(y).unwrap();
//! assert_eq!(g.value(y).item(), 9.0);
//! assert_eq!(g.grad(x), &[6.0]);
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense row-major tensor with a same-shaped gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || expected != data.len() {
            return Err(Error::InvalidTensor {
                shape,
                expected,
                actual: data.len(),
            });
        }
        let grad = vec![0.0; data.len()];
        Ok(Self { shape, data, grad })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: vec![0.0],
        }
    }

    /// One-dimensional tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data).expect("vector must be non-empty")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Rows of a 2-D tensor; a 1-D tensor counts as one row.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Gathers rows of a 2-D tensor into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &r in indices {
            data.extend_from_slice(self.row(r));
        }
        Self::new(vec![indices.len(), c], data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Reduce down each column.
    Rows,
    /// Reduce across each row.
    Cols,
}

/// Operation kinds, used for reporting and for backward-rule fault
/// injection in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Param,
    Constant,
    MatMul,
    Add,
    AddRow,
    Sub,
    Scale,
    AddScalar,
    Relu,
    Tanh,
    SumSq,
    SumSqRows,
    LogSumExp,
    Gather,
    Mean,
    KlSoftmaxRows,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::Param,
        OpKind::Constant,
        OpKind::MatMul,
        OpKind::Add,
        OpKind::AddRow,
        OpKind::Sub,
        OpKind::Scale,
        OpKind::AddScalar,
        OpKind::Relu,
        OpKind::Tanh,
        OpKind::SumSq,
        OpKind::SumSqRows,
        OpKind::LogSumExp,
        OpKind::Gather,
        OpKind::Mean,
        OpKind::KlSoftmaxRows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Param => "param",
            OpKind::Constant => "constant",
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::AddRow => "add_row",
            OpKind::Sub => "sub",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::SumSq => "sum_sq",
            OpKind::SumSqRows => "sum_sq_rows",
            OpKind::LogSumExp => "log_sum_exp",
            OpKind::Gather => "gather",
            OpKind::Mean => "mean",
            OpKind::KlSoftmaxRows => "kl_softmax_rows",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    SumSq(Var),
    SumSqRows(Var),
    LogSumExp(Var, Axis),
    Gather(Var, Vec<usize>),
    Mean(Var),
    /// Row-wise KL(softmax(target) ‖ softmax(input)); holds the target's
    /// log-probabilities.
    KlSoftmaxRows(Var, Vec<f64>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Param => OpKind::Param,
            Op::Constant => OpKind::Constant,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::AddRow(..) => OpKind::AddRow,
            Op::Sub(..) => OpKind::Sub,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(_) => OpKind::AddScalar,
            Op::Relu(_) => OpKind::Relu,
            Op::Tanh(_) => OpKind::Tanh,
            Op::SumSq(_) => OpKind::SumSq,
            Op::SumSqRows(_) => OpKind::SumSqRows,
            Op::LogSumExp(..) => OpKind::LogSumExp,
            Op::Gather(..) => OpKind::Gather,
            Op::Mean(_) => OpKind::Mean,
            Op::KlSoftmaxRows(..) => OpKind::KlSoftmaxRows,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only computation graph.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<(OpKind, f64)>,
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

    /// Scales every input gradient produced by `kind`'s backward rule by
    /// `factor`. Only meant for checking that gradient checks catch broken
    /// rules.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, kind: OpKind, factor: f64) {
        self.fault = Some((kind, factor));
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf. Any gradient already stored in `t` is discarded.
    pub fn param(&mut self, mut t: Tensor) -> Var {
        t.zero_grad();
        self.push(Op::Param, t)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Constant, t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.grad()
    }

    /// Every node handle in insertion order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Inputs of `v` in operand order; empty for leaves.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Param | Op::Constant => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::SumSq(a)
            | Op::SumSqRows(a)
            | Op::LogSumExp(a, _)
            | Op::Gather(a, _)
            | Op::Mean(a)
            | Op::KlSoftmaxRows(a, _) => vec![*a],
        }
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch {
                op,
                left: self.shape(v).to_vec(),
                right: vec![0, 0],
            }),
        }
    }

    fn unary_map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[a.0].value;
        let data = src.data.iter().map(|&x| f(x)).collect();
        let t = Tensor::new(src.shape.clone(), data).expect("same shape");
        self.push(op, t)
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a, b), t))
    }

    /// Elementwise sum. A 1-D `b` whose length equals the column count of a
    /// 2-D `a` is broadcast across rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa == sb {
            let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
            let t = Tensor::new(sa, data)?;
            return Ok(self.push(Op::Add(a, b), t));
        }
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            let bias = self.value(b).data();
            let data = self
                .value(a)
                .data()
                .chunks(sa[1])
                .flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y))
                .collect();
            let t = Tensor::new(sa, data)?;
            return Ok(self.push(Op::AddRow(a, b), t));
        }
        Err(Error::ShapeMismatch {
            op: "add",
            left: sa,
            right: sb,
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "sub",
                left: sa,
                right: sb.to_vec(),
            });
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y);
        let t = Tensor::new(sa, data)?;
        Ok(self.push(Op::Sub(a, b), t))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary_map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary_map(a, Op::AddScalar(a), |x| x + c)
    }

    /// `max(a, 0)` elementwise. The subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary_map(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary_map(a, Op::Tanh(a), libm::tanh)
    }

    /// Sum of squares of all entries, as a scalar.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x * x).sum();
        self.push(Op::SumSq(a), Tensor::scalar(s))
    }

    /// Squared L2 norm of each row of a 2-D tensor.
    pub fn sum_sq_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.dims2(a, "sum_sq_rows")?;
        let data = self
            .value(a)
            .data()
            .chunks(c)
            .map(|row| row.iter().map(|x| x * x).sum())
            .collect();
        let t = Tensor::vector(data);
        Ok(self.push(Op::SumSqRows(a), t))
    }

    /// Numerically stable `log Σ exp` along `axis` of a 2-D tensor.
    pub fn log_sum_exp(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let (r, c) = self.dims2(a, "log_sum_exp")?;
        let x = self.value(a).data();
        let data = match axis {
            Axis::Cols => x.chunks(c).map(log_sum_exp_slice).collect(),
            Axis::Rows => (0..c)
                .map(|j| {
                    let col: Vec<f64> = (0..r).map(|i| x[i * c + j]).collect();
                    log_sum_exp_slice(&col)
                })
                .collect(),
        };
        Ok(self.push(Op::LogSumExp(a, axis), Tensor::vector(data)))
    }

    /// Picks `a[i, indices[i]]` from each row.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(a, "gather")?;
        if indices.len() != r {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: vec![r, c],
                right: vec![indices.len()],
            });
        }
        if let Some((row, &label)) = indices.iter().enumerate().find(|(_, &j)| j >= c) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: c,
            });
        }
        let x = self.value(a).data();
        let data = indices.iter().enumerate().map(|(i, &j)| x[i * c + j]).collect();
        Ok(self.push(Op::Gather(a, indices.to_vec()), Tensor::vector(data)))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a).data();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(m))
    }

    /// Row-wise `KL(softmax(target) ‖ softmax(a))`, one value per row.
    /// `target` is treated as a constant.
    pub fn kl_softmax_rows(&mut self, a: Var, target: &Tensor) -> Result<Var> {
        let (_, c) = self.dims2(a, "kl_softmax_rows")?;
        if self.shape(a) != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "kl_softmax_rows",
                left: self.shape(a).to_vec(),
                right: target.shape().to_vec(),
            });
        }
        let log_p: Vec<f64> = target.data().chunks(c).flat_map(log_softmax_slice).collect();
        let log_q: Vec<f64> = self.value(a).data().chunks(c).flat_map(log_softmax_slice).collect();
        let data = log_p
            .chunks(c)
            .zip(log_q.chunks(c))
            .map(|(lp, lq)| {
                lp.iter()
                    .zip(lq)
                    .map(|(&p, &q)| {
                        let pe = libm::exp(p);
                        if pe == 0.0 {
                            0.0
                        } else {
                            pe * (p - q)
                        }
                    })
                    .sum()
            })
            .collect();
        Ok(self.push(Op::KlSoftmaxRows(a, log_p), Tensor::vector(data)))
    }

    /// Accumulates d(root)/d(leaf) into every parameter leaf.
    ///
    /// Gradients of interior nodes are recomputed from scratch on every call;
    /// parameter leaves keep accumulating until [`Graph::zero_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = self.shape(root);
        if root_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarRoot(root_shape.to_vec()));
        }
        for n in &mut self.nodes[..=root.0] {
            if !matches!(n.op, Op::Param) {
                n.value.zero_grad();
            }
        }
        let mut seed_grad = vec![0.0; 1];
        seed_grad[0] = 1.0;
        self.accumulate(root, &seed_grad);

        for idx in (0..=root.0).rev() {
            if matches!(self.nodes[idx].op, Op::Param | Op::Constant) {
                continue;
            }
            let g = core::mem::take(&mut self.nodes[idx].value.grad);
            let contributions = self.backward_rule(idx, &g);
            self.nodes[idx].value.grad = g;
            let factor = match self.fault {
                Some((kind, f)) if kind == self.nodes[idx].op.kind() => Some(f),
                _ => None,
            };
            for (input, mut contrib) in contributions {
                if let Some(f) = factor {
                    contrib.iter_mut().for_each(|c| *c *= f);
                }
                self.accumulate(input, &contrib);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contrib: &[f64]) {
        let node = &mut self.nodes[v.0];
        if matches!(node.op, Op::Constant) {
            return;
        }
        for (g, c) in node.value.grad.iter_mut().zip(contrib) {
            *g += c;
        }
    }

    fn backward_rule(&self, idx: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Param | Op::Constant => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // dA = G·Bᵀ, dB = Aᵀ·G
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let a_ip = av[i * k + p];
                        let drow = &mut db[p * n..(p + 1) * n];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d += a_ip * gv;
                        }
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::AddRow(a, b) => {
                let c = self.shape(*b)[0];
                let mut db = vec![0.0; c];
                for row in g.chunks(c) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                vec![(*a, g.to_vec()), (*b, db)]
            }
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|x| -x).collect())],
            Op::Scale(a, c) => vec![(*a, g.iter().map(|x| x * c).collect())],
            Op::AddScalar(a) => vec![(*a, g.to_vec())],
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let d = x
                    .iter()
                    .zip(g)
                    .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                vec![(*a, d)]
            }
            Op::Tanh(a) => {
                let d = out.iter().zip(g).map(|(y, gi)| gi * (1.0 - y * y)).collect();
                vec![(*a, d)]
            }
            Op::SumSq(a) => {
                let d = self.value(*a).data().iter().map(|x| 2.0 * x * g[0]).collect();
                vec![(*a, d)]
            }
            Op::SumSqRows(a) => {
                let c = self.shape(*a)[1];
                let d = self
                    .value(*a)
                    .data()
                    .chunks(c)
                    .zip(g)
                    .flat_map(|(row, &gi)| row.iter().map(move |x| 2.0 * x * gi))
                    .collect();
                vec![(*a, d)]
            }
            Op::LogSumExp(a, axis) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                let x = self.value(*a).data();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        let (lse, gi) = match axis {
                            Axis::Cols => (out[i], g[i]),
                            Axis::Rows => (out[j], g[j]),
                        };
                        d[i * c + j] = gi * libm::exp(x[i * c + j] - lse);
                    }
                }
                vec![(*a, d)]
            }
            Op::Gather(a, indices) => {
                let c = self.shape(*a)[1];
                let mut d = vec![0.0; self.value(*a).len()];
                for (i, (&j, &gi)) in indices.iter().zip(g).enumerate() {
                    d[i * c + j] = gi;
                }
                vec![(*a, d)]
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let share = g[0] / n as f64;
                vec![(*a, vec![share; n])]
            }
            Op::KlSoftmaxRows(a, log_p) => {
                let c = self.shape(*a)[1];
                let x = self.value(*a).data();
                let d = x
                    .chunks(c)
                    .zip(log_p.chunks(c))
                    .zip(g)
                    .flat_map(|((row, lp), &gi)| {
                        let lq = log_softmax_slice(row);
                        lq.into_iter()
                            .zip(lp)
                            .map(move |(q, &p)| gi * (libm::exp(q) - libm::exp(p)))
                    })
                    .collect();
                vec![(*a, d)]
            }
        }
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += a_ip * bv;
            }
        }
    }
    out
}

pub(crate) fn log_sum_exp_slice(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = x.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(s)
}

pub(crate) fn log_softmax_slice(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp_slice(x);
    x.iter().map(|v| v - lse).collect()
}

/// Largest relative disagreement between analytic and central-difference
/// gradients over every entry of every parameter.
///
/// `loss_fn` builds the loss from the parameter variables on a fresh graph.
/// The relative error of one entry is
/// `|analytic − numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn grad_check<F>(params: &[Tensor], eps: f64, mut loss_fn: F) -> Result<f64>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_with(params, eps, None, &mut loss_fn)
}

#[doc(hidden)]
pub fn grad_check_with<F>(
    params: &[Tensor],
    eps: f64,
    fault: Option<(OpKind, f64)>,
    loss_fn: &mut F,
) -> Result<f64>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", "must be positive and finite"));
    }
    let mut g = Graph::new();
    if let Some((kind, f)) = fault {
        g.corrupt_backward(kind, f);
    }
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = loss_fn(&mut g, &vars)?;
    let value = g.value(root).item();
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    g.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v).to_vec()).collect();

    let mut eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let root = loss_fn(&mut g, &vars)?;
        let v = g.value(root).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteLoss(v))
        }
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = work[pi].data[j];
            work[pi].data[j] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data[j] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = libm::fabs(a - numeric) / f64::max(1e-12, libm::fabs(a) + libm::fabs(numeric));
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
