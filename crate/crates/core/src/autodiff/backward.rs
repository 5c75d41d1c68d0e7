use super::kernels::{self, sign};
use super::{AutodiffError, Elementwise, Node, Op, Result, Var};
use crate::tensor::Tensor;

/// Gradients of a scalar root with respect to graph nodes.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// `None` when `v` is not upstream of the root or does not require grad.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros when it did not contribute to the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], v: Var, g: Tensor) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            let shape = nodes[v.0].value.shape();
            *slot = Some(if g.shape() == shape {
                g
            } else {
                Tensor::from_shape(shape, g.into_data())
            });
        }
    }
}

pub(super) fn run(nodes: &[Node], root: Var) -> Result<Gradients> {
    let root_value = &nodes[root.0].value;
    if !root_value.is_scalar() {
        return Err(AutodiffError::NonScalarRoot(root_value.shape().to_vec()));
    }
    let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
    if nodes[root.0].requires_grad {
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));
    }
    for id in (0..=root.0).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &nodes[id];
        propagate(nodes, node, &g, &mut grads);
        grads[id] = Some(g);
    }
    grads.resize(nodes.len(), None);
    Ok(Gradients {
        grads,
        shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
    })
}

fn value(nodes: &[Node], v: Var) -> &Tensor {
    &nodes[v.0].value
}

fn wants(nodes: &[Node], v: Var) -> bool {
    nodes[v.0].requires_grad
}

/// Reduces a broadcast gradient back onto a scalar operand.
fn fit(g: Vec<f64>, target: &Tensor) -> Tensor {
    if target.numel() == 1 && g.len() != 1 {
        Tensor::from_shape(target.shape(), vec![g.iter().sum()])
    } else {
        Tensor::from_shape(target.shape(), g)
    }
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let gd = g.data();
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Elementwise { kind, a, b } => {
            let (ta, tb) = (value(nodes, *a), value(nodes, *b));
            let pick = |t: &Tensor, i: usize| {
                if t.numel() == 1 {
                    t.data()[0]
                } else {
                    t.data()[i]
                }
            };
            if wants(nodes, *a) {
                let ga: Vec<f64> = match kind {
                    Elementwise::Add | Elementwise::Sub => gd.to_vec(),
                    Elementwise::Mul => gd.iter().enumerate().map(|(i, x)| x * pick(tb, i)).collect(),
                };
                accumulate(grads, nodes, *a, fit(ga, ta));
            }
            if wants(nodes, *b) {
                let gb: Vec<f64> = match kind {
                    Elementwise::Add => gd.to_vec(),
                    Elementwise::Sub => gd.iter().map(|x| -x).collect(),
                    Elementwise::Mul => gd.iter().enumerate().map(|(i, x)| x * pick(ta, i)).collect(),
                };
                accumulate(grads, nodes, *b, fit(gb, tb));
            }
        }
        Op::Scale(a, c) => {
            accumulate(grads, nodes, *a, g.map(|x| x * c));
        }
        Op::MatMul(a, b) => {
            let (ta, tb) = (value(nodes, *a), value(nodes, *b));
            let (m, n, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
            if wants(nodes, *a) {
                let mut ga = vec![0.0; m * n];
                kernels::matmul_b_t(gd, tb.data(), &mut ga, m, n, p);
                accumulate(grads, nodes, *a, Tensor::matrix(m, n, ga));
            }
            if wants(nodes, *b) {
                let mut gb = vec![0.0; n * p];
                kernels::matmul_a_t(ta.data(), gd, &mut gb, m, n, p);
                accumulate(grads, nodes, *b, Tensor::matrix(n, p, gb));
            }
        }
        Op::BatchMatMul(a, b) => {
            let (ta, tb) = (value(nodes, *a), value(nodes, *b));
            let (batch, m, n, p) = (ta.shape()[0], ta.shape()[1], ta.shape()[2], tb.shape()[2]);
            if wants(nodes, *a) {
                let mut ga = vec![0.0; batch * m * n];
                for bi in 0..batch {
                    kernels::matmul_b_t(
                        &gd[bi * m * p..(bi + 1) * m * p],
                        &tb.data()[bi * n * p..(bi + 1) * n * p],
                        &mut ga[bi * m * n..(bi + 1) * m * n],
                        m,
                        n,
                        p,
                    );
                }
                accumulate(grads, nodes, *a, Tensor::from_shape(&[batch, m, n], ga));
            }
            if wants(nodes, *b) {
                let mut gb = vec![0.0; batch * n * p];
                for bi in 0..batch {
                    kernels::matmul_a_t(
                        &ta.data()[bi * m * n..(bi + 1) * m * n],
                        &gd[bi * m * p..(bi + 1) * m * p],
                        &mut gb[bi * n * p..(bi + 1) * n * p],
                        m,
                        n,
                        p,
                    );
                }
                accumulate(grads, nodes, *b, Tensor::from_shape(&[batch, n, p], gb));
            }
        }
        Op::SoftmaxRows(a) => {
            let width = out.shape().last().copied().unwrap_or(1);
            let mut ga = vec![0.0; out.numel()];
            for ((y, gy), dst) in out.data().chunks(width).zip(gd.chunks(width)).zip(ga.chunks_mut(width)) {
                let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                for ((d, yi), gi) in dst.iter_mut().zip(y).zip(gy) {
                    *d = yi * (gi - dot);
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_shape(out.shape(), ga));
        }
        Op::LogSoftmaxRows(a) => {
            let width = out.shape().last().copied().unwrap_or(1);
            let mut ga = vec![0.0; out.numel()];
            for ((ly, gy), dst) in out.data().chunks(width).zip(gd.chunks(width)).zip(ga.chunks_mut(width)) {
                let total: f64 = gy.iter().sum();
                for ((d, l), gi) in dst.iter_mut().zip(ly).zip(gy) {
                    *d = gi - l.exp() * total;
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_shape(out.shape(), ga));
        }
        Op::Abs(a) => {
            let x = value(nodes, *a);
            let ga = x.data().iter().zip(gd).map(|(x, g)| g * sign(*x)).collect();
            accumulate(grads, nodes, *a, Tensor::from_shape(x.shape(), ga));
        }
        Op::Relu(a) => {
            let x = value(nodes, *a);
            let ga = x
                .data()
                .iter()
                .zip(gd)
                .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            accumulate(grads, nodes, *a, Tensor::from_shape(x.shape(), ga));
        }
        Op::LogSigmoid(a) => {
            let x = value(nodes, *a);
            let ga = x.data().iter().zip(gd).map(|(x, g)| g * kernels::sigmoid(-x)).collect();
            accumulate(grads, nodes, *a, Tensor::from_shape(x.shape(), ga));
        }
        Op::Sum(a) => {
            let x = value(nodes, *a);
            accumulate(grads, nodes, *a, Tensor::full(x.shape(), gd[0]));
        }
        Op::SumAxis(a, axis) => {
            let shape = value(nodes, *a).shape();
            let outer: usize = shape[..*axis].iter().product();
            let len = shape[*axis];
            let inner: usize = shape[axis + 1..].iter().product();
            let mut ga = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                for _ in 0..len {
                    ga.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_shape(shape, ga));
        }
        Op::Reshape(a) => {
            let shape = value(nodes, *a).shape();
            accumulate(grads, nodes, *a, Tensor::from_shape(shape, gd.to_vec()));
        }
        Op::Permute(a, perm) => {
            let inv = kernels::inverse_permutation(perm);
            accumulate(grads, nodes, *a, kernels::permute(g, &inv));
        }
        Op::Concat(parts, axis) => {
            let shape = out.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let total = shape[*axis] * inner;
            let mut start = 0;
            for p in parts {
                let ps = value(nodes, *p).shape();
                let chunk = ps[*axis] * inner;
                if wants(nodes, *p) {
                    let mut gp = Vec::with_capacity(outer * chunk);
                    for o in 0..outer {
                        gp.extend_from_slice(&gd[o * total + start..o * total + start + chunk]);
                    }
                    accumulate(grads, nodes, *p, Tensor::from_shape(ps, gp));
                }
                start += chunk;
            }
        }
        Op::Gather(a, indices) => {
            let x = value(nodes, *a);
            let mut ga = vec![0.0; x.numel()];
            for (&i, gi) in indices.iter().zip(gd) {
                ga[i] += gi;
            }
            accumulate(grads, nodes, *a, Tensor::from_shape(x.shape(), ga));
        }
        Op::PairwiseAbsRowSum(a) => {
            let x = value(nodes, *a);
            let width = x.shape().last().copied().unwrap_or(1);
            let mut ga = vec![0.0; x.numel()];
            for ((xs, gs), dst) in x.data().chunks(width).zip(gd.chunks(width)).zip(ga.chunks_mut(width)) {
                kernels::pairwise_abs_row_sum_grad(xs, gs, dst);
            }
            accumulate(grads, nodes, *a, Tensor::from_shape(x.shape(), ga));
        }
        Op::UnimodalLogits { a, k, inv_tau } => {
            let x = value(nodes, *a);
            let n = x.shape()[1];
            let mut ga = vec![0.0; x.numel()];
            let mut spread_grad = vec![0.0; n];
            for ((xs, gs), dst) in x
                .data()
                .chunks(n.max(1))
                .zip(gd.chunks((k * n).max(1)))
                .zip(ga.chunks_mut(n.max(1)))
            {
                spread_grad.fill(0.0);
                for (l, grow) in gs.chunks(n).enumerate() {
                    let coef = (n + 1) as f64 - 2.0 * (l + 1) as f64;
                    for ((d, h), &gv) in dst.iter_mut().zip(spread_grad.iter_mut()).zip(grow) {
                        *d += coef * gv * inv_tau;
                        *h -= gv * inv_tau;
                    }
                }
                kernels::pairwise_abs_row_sum_grad(xs, &spread_grad, dst);
            }
            accumulate(grads, nodes, *a, Tensor::from_shape(x.shape(), ga));
        }
        Op::StraightThrough(relaxed) => {
            accumulate(grads, nodes, *relaxed, g.clone());
        }
    }
}
