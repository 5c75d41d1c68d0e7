use crate::tensor::{strides, Tensor};

/// `out (m×p) += a (m×n) · b (n×p)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in row.iter_mut().zip(&b[k * p..(k + 1) * p]) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out (m×n) += g (m×p) · bᵀ` where `b` is `n×p`.
pub(crate) fn matmul_b_t(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let grow = &g[i * p..(i + 1) * p];
        for k in 0..n {
            let brow = &b[k * p..(k + 1) * p];
            out[i * n + k] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out (n×p) += aᵀ · g` where `a` is `m×n` and `g` is `m×p`.
pub(crate) fn matmul_a_t(a: &[f64], g: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let grow = &g[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for (o, gij) in out[k * p..(k + 1) * p].iter_mut().zip(grow) {
                *o += aik * gij;
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn permute(t: &Tensor, perm: &[usize]) -> Tensor {
    let in_shape = t.shape();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    // stride in the input for each output axis
    let walk: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    // moving only unit axes keeps the memory order
    let mut moved = perm.iter().copied().filter(|&p| in_shape[p] > 1);
    let mut prev = moved.next();
    if moved.all(|p| {
        let ordered = prev.map_or(true, |q| q < p);
        prev = Some(p);
        ordered
    }) {
        return Tensor::from_shape(&out_shape, t.data().to_vec());
    }
    let n = t.numel();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    let mut offset = 0usize;
    let src = t.data();
    for _ in 0..n {
        out.push(src[offset]);
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            offset += walk[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= walk[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Tensor::from_shape(&out_shape, out)
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub(crate) fn pairwise_abs_row_sum(x: &[f64], out: &mut [f64]) {
    for (o, &xc) in out.iter_mut().zip(x) {
        *o = x.iter().map(|&xd| (xc - xd).abs()).sum();
    }
}

/// Gradient of [`pairwise_abs_row_sum`]: `gx_a = Σ_c (g_a + g_c)·sign(x_a − x_c)`.
pub(crate) fn pairwise_abs_row_sum_grad(x: &[f64], g: &[f64], gx: &mut [f64]) {
    for (a, ga) in gx.iter_mut().enumerate() {
        let (xa, g_a) = (x[a], g[a]);
        *ga += x
            .iter()
            .zip(g)
            .map(|(&xc, &gc)| (g_a + gc) * sign(xa - xc))
            .sum::<f64>();
    }
}
