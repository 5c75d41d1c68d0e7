//! Exact descending sort and its unimodal row-stochastic relaxation.
//!
//! Row `i` (1-based) of the relaxed permutation matrix for scores `s` of
//! length `L` at temperature `τ` is
//!
//! ```text
//! softmax(((L + 1 − 2i)·s − A·1) / τ),   A_ab = |s_a − s_b|
//! ```
//!
//! Each row is a distribution over items; as `τ → 0⁺` row `i` concentrates
//! on the item of rank `i`. Only the first `k` rows are ever materialized.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A ranking: `ranks()[j]` is the 0-based index of the item placed at rank `j + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let len = ranks.len();
        let mut seen = vec![false; len];
        let ok = ranks.iter().all(|&r| r < len && !std::mem::replace(&mut seen[r], true));
        if !ok {
            return Err(Error::NotAPermutation { ranks, len });
        }
        Ok(Self(ranks))
    }

    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (rank, &item) in self.0.iter().enumerate() {
            inv[item] = rank;
        }
        Self(inv)
    }

    /// 1-based rank of every item.
    pub fn positions(&self) -> Vec<usize> {
        self.inverse().0.into_iter().map(|r| r + 1).collect()
    }
}

/// Indices ordered by descending score; ties keep the smaller index first.
pub fn hard_sort_desc(scores: &[f64]) -> Result<Permutation> {
    if scores.is_empty() {
        return Err(Error::Empty);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(Permutation(idx))
}

/// `L×L` 0/1 matrix with a one at `(j, π_j)`; left-multiplying a score
/// vector yields the scores in ranked order.
pub fn permutation_matrix(p: &Permutation) -> Tensor {
    top_rows(p, p.len(), p.len())
}

/// First `k` rows of the permutation matrix of `p`, widened to `columns`.
pub fn top_rows(p: &Permutation, k: usize, columns: usize) -> Tensor {
    let mut m = vec![0.0; k * columns];
    for (row, &item) in p.ranks().iter().take(k).enumerate() {
        m[row * columns + item] = 1.0;
    }
    Tensor::matrix(k, columns, m)
}

/// Top `k` rows of a relaxed sort permutation over `columns` items.
#[derive(Debug, Clone, Copy)]
pub struct RelaxedPermutation {
    /// `k × columns` row-stochastic matrix on the tape.
    pub rows: Var,
    pub k: usize,
    pub columns: usize,
    pub tau: f64,
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Temperature(tau))
    }
}

/// Pre-softmax logits for groups of candidates.
///
/// `y` has shape `(G, n)`; the result has shape `(G, k, n)` where entry
/// `(g, l, c)` is `((n + 1 − 2(l+1))·y_gc − Σ_c' |y_gc − y_gc'|) / τ`.
pub(crate) fn unimodal_logits(g: &mut Graph, y: Var, k: usize, tau: f64) -> Result<Var> {
    Ok(g.unimodal_logits(y, k, tau)?)
}

/// The `k × L` logits of the relaxed sort, before the row softmax.
pub fn neuralsort_logits(g: &mut Graph, scores: Var, tau: f64, k: usize) -> Result<Var> {
    check_tau(tau)?;
    let len = vector_len(g, scores)?;
    if k == 0 || k > len {
        return Err(Error::Cutoff { k, len });
    }
    let y = g.reshape(scores, &[1, len])?;
    let logits = unimodal_logits(g, y, k, tau)?;
    Ok(g.reshape(logits, &[k, len])?)
}

/// First `k` rows of the relaxed sort permutation of `scores` at temperature `tau`.
pub fn neuralsort(g: &mut Graph, scores: Var, tau: f64, k: usize) -> Result<RelaxedPermutation> {
    let logits = neuralsort_logits(g, scores, tau, k)?;
    let rows = g.softmax_rows(logits);
    Ok(RelaxedPermutation {
        rows,
        k,
        columns: g.shape(scores)[0],
        tau,
    })
}

/// Replaces the forward value of `relaxed` with the exact top-k rows
/// obtained by sorting `scores`; gradients still flow through the relaxation.
pub fn straight_through(g: &mut Graph, relaxed: &RelaxedPermutation, scores: &[f64]) -> Result<Var> {
    if scores.len() != relaxed.columns {
        return Err(Error::LengthMismatch {
            labels: relaxed.columns,
            scores: scores.len(),
        });
    }
    let hard = top_rows(&hard_sort_desc(scores)?, relaxed.k, relaxed.columns);
    Ok(g.straight_through(relaxed.rows, hard)?)
}

/// Column of the largest entry in each row (first on ties).
pub fn row_argmax(m: &Tensor) -> Vec<usize> {
    let cols = m.shape()[1];
    m.data()
        .chunks(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    },
                )
                .0
        })
        .collect()
}

pub(crate) fn vector_len(g: &Graph, v: Var) -> Result<usize> {
    match *g.shape(v) {
        [len] if len > 0 => Ok(len),
        ref s => Err(crate::autodiff::AutodiffError::Rank {
            op: "score vector",
            expected: 1,
            shape: s.to_vec(),
        }
        .into()),
    }
}
