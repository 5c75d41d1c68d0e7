//! Reverse-mode automatic differentiation over dense [`Tensor`]s.
//!
//! A [`Graph`] is an append-only tape. Every operation evaluates eagerly,
//! stores its output, and records what it needs for the backward sweep.
//! Because inputs are always created before the nodes that consume them, the
//! tape is topologically ordered by construction and [`Graph::backward`] is a
//! single reverse pass.
//!
//! Broadcasting is limited to scalar-with-tensor in the elementwise
//! operations. Anything else is aligned explicitly with [`Graph::reshape`],
//! [`Graph::permute`] or a product with a ones vector.
//!
//! Subgradients: `abs` and `relu` use 0 at the origin.

mod backward;
mod kernels;

use thiserror::Error;

use crate::tensor::{numel, Tensor};

pub use backward::Gradients;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("reshape: cannot view {from:?} as {to:?}")]
    ElementCount { from: Vec<usize>, to: Vec<usize> },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("permute: {0:?} is not a permutation of the axes")]
    InvalidPermutation(Vec<usize>),
    #[error("gather: index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("backward: root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("concat: empty input list")]
    EmptyConcat,
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Elementwise { kind: Elementwise, a: Var, b: Var },
    Scale(Var, f64),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Abs(Var),
    Relu(Var),
    LogSigmoid(Var),
    Sum(Var),
    SumAxis(Var, usize),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Gather(Var, Vec<usize>),
    PairwiseAbsRowSum(Var),
    UnimodalLogits { a: Var, k: usize, inv_tau: f64 },
    StraightThrough(Var),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

/// Append-only computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// A differentiable leaf (model parameter or input of interest).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, op: Op, inputs: &[Var], value: Tensor) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(op, value, rg)
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: Elementwise) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape = if ta.shape() == tb.shape() || tb.is_scalar() {
            ta.shape().to_vec()
        } else if ta.is_scalar() {
            tb.shape().to_vec()
        } else {
            return Err(AutodiffError::ShapeMismatch {
                op: "elementwise",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        };
        let f = match kind {
            Elementwise::Add => |x: f64, y: f64| x + y,
            Elementwise::Sub => |x: f64, y: f64| x - y,
            Elementwise::Mul => |x: f64, y: f64| x * y,
        };
        let n = numel(&out_shape);
        let (da, db) = (ta.data(), tb.data());
        let pick = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        let data = (0..n).map(|i| f(pick(da, i), pick(db, i))).collect();
        let value = Tensor::from_shape(&out_shape, data);
        Ok(self.derived(Op::Elementwise { kind, a, b }, &[a, b], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.derived(Op::Scale(a, c), &[a], value)
    }

    /// `(m×n)·(n×p)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, n, p) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * p];
        kernels::matmul(ta.data(), tb.data(), &mut out, m, n, p);
        let value = Tensor::matrix(m, p, out);
        Ok(self.derived(Op::MatMul(a, b), &[a, b], value))
    }

    /// Batched `(B×m×n)·(B×n×p)`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(AutodiffError::ShapeMismatch {
                op: "batch_matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (batch, m, n, p) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; batch * m * p];
        for bi in 0..batch {
            kernels::matmul(
                &ta.data()[bi * m * n..(bi + 1) * m * n],
                &tb.data()[bi * n * p..(bi + 1) * n * p],
                &mut out[bi * m * p..(bi + 1) * m * p],
                m,
                n,
                p,
            );
        }
        let value = Tensor::from_shape(&[batch, m, p], out);
        Ok(self.derived(Op::BatchMatMul(a, b), &[a, b], value))
    }

    /// Softmax along the last axis, with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let width = last_dim(t);
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(width) {
            kernels::softmax_in_place(row);
        }
        let value = Tensor::from_shape(t.shape(), out);
        self.derived(Op::SoftmaxRows(a), &[a], value)
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let width = last_dim(t);
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(width) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let value = Tensor::from_shape(t.shape(), out);
        self.derived(Op::LogSoftmaxRows(a), &[a], value)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.derived(Op::Abs(a), &[a], value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.derived(Op::Relu(a), &[a], value)
    }

    /// `log σ(x)`, evaluated without overflow.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(kernels::log_sigmoid);
        self.derived(Op::LogSigmoid(a), &[a], value)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.derived(Op::Sum(a), &[a], value)
    }

    /// Sum along `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let shape = t.shape();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis {
                op: "sum_axis",
                axis,
                shape: shape.to_vec(),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &t.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (dst, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += s;
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let value = Tensor::from_shape(&out_shape, out);
        Ok(self.derived(Op::SumAxis(a, axis), &[a], value))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let value = t.reshaped(shape).ok_or_else(|| AutodiffError::ElementCount {
            from: t.shape().to_vec(),
            to: shape.to_vec(),
        })?;
        Ok(self.derived(Op::Reshape(a), &[a], value))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if !is_permutation(perm, t.rank()) {
            return Err(AutodiffError::InvalidPermutation(perm.to_vec()));
        }
        let value = kernels::permute(t, perm);
        Ok(self.derived(Op::Permute(a, perm.to_vec()), &[a], value))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(AutodiffError::InvalidAxis {
                op: "concat",
                axis,
                shape: base,
            });
        }
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let agrees =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !agrees {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::from_shape(&shape, out);
        Ok(self.derived(Op::Concat(parts.to_vec(), axis), parts, value))
    }

    /// Selects elements of the flattened input; the output is a vector.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let len = t.numel();
        if let Some(&index) = indices.iter().find(|&&i| i >= len) {
            return Err(AutodiffError::IndexOutOfRange { index, len });
        }
        if indices.is_empty() {
            return Err(AutodiffError::ShapeMismatch {
                op: "gather",
                left: t.shape().to_vec(),
                right: vec![0],
            });
        }
        let value = Tensor::vector(indices.iter().map(|&i| t.data()[i]).collect());
        Ok(self.derived(Op::Gather(a, indices.to_vec()), &[a], value))
    }

    /// For every row `x` along the last axis, `out_c = Σ_c' |x_c − x_c'|`.
    ///
    /// This is the row sum of the pairwise absolute-difference matrix, fused
    /// so the `n×n` matrix is never stored. Cost is quadratic in the row width.
    pub fn pairwise_abs_row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let width = last_dim(t);
        let mut out = vec![0.0; t.numel()];
        for (src, dst) in t.data().chunks(width).zip(out.chunks_mut(width)) {
            kernels::pairwise_abs_row_sum(src, dst);
        }
        let value = Tensor::from_shape(t.shape(), out);
        self.derived(Op::PairwiseAbsRowSum(a), &[a], value)
    }

    /// Relaxed-sort logits of every row of a `(G, n)` matrix.
    ///
    /// The result has shape `(G, k, n)` with entry `(g, l, c)` equal to
    /// `((n + 1 − 2(l+1))·x_gc − Σ_c' |x_gc − x_gc'|) / τ`.
    pub fn unimodal_logits(&mut self, a: Var, k: usize, tau: f64) -> Result<Var> {
        let t = self.value(a);
        let [groups, n] = *t.shape() else {
            return Err(AutodiffError::Rank {
                op: "unimodal_logits",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        };
        let inv_tau = 1.0 / tau;
        let mut spread = vec![0.0; n];
        let mut out = Vec::with_capacity(groups * k * n);
        for row in t.data().chunks(n.max(1)).take(groups) {
            kernels::pairwise_abs_row_sum(row, &mut spread);
            for l in 1..=k {
                let coef = (n + 1) as f64 - 2.0 * l as f64;
                out.extend(row.iter().zip(&spread).map(|(&x, &s)| (x * coef - s) * inv_tau));
            }
        }
        let value = Tensor::from_shape(&[groups, k, n], out);
        Ok(self.derived(Op::UnimodalLogits { a, k, inv_tau }, &[a], value))
    }

    /// Forward value `hard`, backward gradient passed unchanged to `relaxed`.
    pub fn straight_through(&mut self, relaxed: Var, hard: Tensor) -> Result<Var> {
        let s = self.value(relaxed).shape();
        if s != hard.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "straight_through",
                left: s.to_vec(),
                right: hard.shape().to_vec(),
            });
        }
        Ok(self.derived(Op::StraightThrough(relaxed), &[relaxed], hard))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        backward::run(&self.nodes, root)
    }
}

fn last_dim(t: &Tensor) -> usize {
    t.shape().last().copied().unwrap_or(1)
}

fn is_permutation(perm: &[usize], rank: usize) -> bool {
    if perm.len() != rank {
        return false;
    }
    let mut seen = vec![false; rank];
    perm.iter().all(|&p| p < rank && !std::mem::replace(&mut seen[p], true))
}
