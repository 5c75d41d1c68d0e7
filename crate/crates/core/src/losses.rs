//! Ranking losses as graph builders over one query's predicted scores.
//!
//! Every builder takes the query's labels, an optional validity mask and the
//! score vector already on the tape. Masked items are gathered away first,
//! so a padded query yields exactly the loss of its unpadded form. Builders
//! return `Ok(None)` when the loss is undefined for the query (for example no
//! relevant item); callers skip such queries.
//!
//! The relaxed losses clamp the cutoff `k` to the number of valid items.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::metrics::{discount, gain, ideal_dcg_at_k};
use crate::relaxsort::{hard_sort_desc, neuralsort_logits, straight_through, vector_len};
use crate::tensor::Tensor;
use crate::topk_dnc::{dnc_topk, make_plan, padding_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    PirankNdcg,
    PirankArp,
    Mse,
    RankNet,
    LambdaRank,
    Softmax,
    NeuralSortCe,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::PirankNdcg,
        LossKind::PirankArp,
        LossKind::Mse,
        LossKind::RankNet,
        LossKind::LambdaRank,
        LossKind::Softmax,
        LossKind::NeuralSortCe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::PirankNdcg => "pirank-ndcg",
            LossKind::PirankArp => "pirank-arp",
            LossKind::Mse => "mse",
            LossKind::RankNet => "ranknet",
            LossKind::LambdaRank => "lambdarank",
            LossKind::Softmax => "softmax",
            LossKind::NeuralSortCe => "neuralsort-ce",
        }
    }

    /// Uses the relaxed top-k permutation (and so `tau`, `depth`).
    pub fn is_relaxed(self) -> bool {
        matches!(self, LossKind::PirankNdcg | LossKind::PirankArp)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LossKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown loss `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Cutoff of the relaxed and LambdaRank losses.
    pub k: usize,
    pub tau: f64,
    /// Tree depth of the relaxed top-k; 1 is the flat relaxation.
    pub depth: usize,
    /// Exact forward value, relaxed gradient.
    pub straight_through: bool,
    /// Ratio between consecutive level temperatures (1 = uniform).
    pub temperature_ratio: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::PirankNdcg,
            k: 10,
            tau: 1.0,
            depth: 1,
            straight_through: false,
            temperature_ratio: 1.0,
        }
    }
}

/// Labels and scores of the unmasked items.
pub fn valid_items(g: &mut Graph, labels: &[f64], mask: Option<&[bool]>, scores: Var) -> Result<(Vec<f64>, Var)> {
    let len = vector_len(g, scores)?;
    if labels.len() != len {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            scores: len,
        });
    }
    let Some(mask) = mask else {
        return Ok((labels.to_vec(), scores));
    };
    if mask.len() != len {
        return Err(Error::LengthMismatch {
            labels: mask.len(),
            scores: len,
        });
    }
    if mask.iter().all(|&m| m) {
        return Ok((labels.to_vec(), scores));
    }
    let keep: Vec<usize> = (0..len).filter(|&i| mask[i]).collect();
    if keep.is_empty() {
        return Err(Error::Empty);
    }
    let y = keep.iter().map(|&i| labels[i]).collect();
    Ok((y, g.gather(scores, &keep)?))
}

/// Relaxed top-`k` rows (`k × L_padded`) of the configured plan, with the
/// straight-through substitution applied when enabled.
pub fn relaxed_top_rows(g: &mut Graph, scores: Var, k: usize, cfg: &LossConfig) -> Result<Var> {
    let len = vector_len(g, scores)?;
    let plan = make_plan(len, k, cfg.depth, cfg.tau, None)?;
    let plan = if cfg.temperature_ratio != 1.0 {
        plan.with_temperature_ratio(cfg.temperature_ratio)?
    } else {
        plan
    };
    let relaxed = dnc_topk(g, scores, &plan)?;
    if !cfg.straight_through {
        return Ok(relaxed.rows);
    }
    let mut padded = g.value(scores).data().to_vec();
    let fill = padding_value(&padded, plan.tau());
    padded.resize(plan.padded_len(), fill);
    straight_through(g, &relaxed, &padded)
}

/// `Σ_{j≤k} d_j · [P̂ v]_j` for per-item values `v` and rank weights `d`.
fn weighted_top_k(g: &mut Graph, rows: Var, values: &[f64], weights: Vec<f64>) -> Result<Var> {
    let (k, cols) = (g.shape(rows)[0], g.shape(rows)[1]);
    let mut v = values.to_vec();
    v.resize(cols, 0.0);
    let v = g.constant(Tensor::matrix(cols, 1, v));
    let ranked = g.matmul(rows, v)?;
    let w = g.constant(Tensor::matrix(1, k, weights));
    let total = g.matmul(w, ranked)?;
    Ok(g.reshape(total, &[])?)
}

/// Relaxed DCG@k: `Σ_{j≤k} [P̂ g]_j / log₂(1 + j)` with gains `2^y − 1`.
pub fn relaxed_dcg(g: &mut Graph, labels: &[f64], mask: Option<&[bool]>, scores: Var, cfg: &LossConfig) -> Result<Var> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let k = cfg.k.min(y.len());
    let rows = relaxed_top_rows(g, s, k, cfg)?;
    let gains: Vec<f64> = y.iter().map(|&l| gain(l)).collect();
    weighted_top_k(g, rows, &gains, (1..=k).map(discount).collect())
}

fn one_minus(g: &mut Graph, v: Var) -> Result<Var> {
    let neg = g.scale(v, -1.0);
    let one = g.constant(Tensor::scalar(1.0));
    Ok(g.add(one, neg)?)
}

/// `1 − relaxed DCG@k / ideal DCG@k`; `None` when the ideal DCG is zero.
pub fn pirank_ndcg_loss(
    g: &mut Graph,
    labels: &[f64],
    mask: Option<&[bool]>,
    scores: Var,
    cfg: &LossConfig,
) -> Result<Option<Var>> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let k = cfg.k.min(y.len());
    let ideal = ideal_dcg_at_k(&y, k);
    if ideal <= 0.0 {
        return Ok(None);
    }
    let dcg = relaxed_dcg(g, &y, None, s, cfg)?;
    let ratio = g.scale(dcg, 1.0 / ideal);
    one_minus(g, ratio).map(Some)
}

/// `Σ_{j≤k} [P̂ y]_j · j / Σ_{j≤k} y_j`, the denominator summing the first
/// `k` labels in list order. `None` when that sum is not positive.
pub fn pirank_arp_loss(
    g: &mut Graph,
    labels: &[f64],
    mask: Option<&[bool]>,
    scores: Var,
    cfg: &LossConfig,
) -> Result<Option<Var>> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let k = cfg.k.min(y.len());
    let denom: f64 = y[..k].iter().sum();
    if denom <= 0.0 {
        return Ok(None);
    }
    let rows = relaxed_top_rows(g, s, k, cfg)?;
    let ranks: Vec<f64> = (1..=k).map(|j| j as f64 / denom).collect();
    weighted_top_k(g, rows, &y, ranks).map(Some)
}

/// Mean squared error between scores and labels.
pub fn mse_loss(g: &mut Graph, labels: &[f64], mask: Option<&[bool]>, scores: Var) -> Result<Var> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let n = y.len();
    let target = g.constant(Tensor::vector(y));
    let diff = g.sub(s, target)?;
    let sq = g.mul(diff, diff)?;
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / n as f64))
}

/// `−Σ w · log σ(ŷ_i − ŷ_j)` over the listed pairs.
fn weighted_pair_loss(g: &mut Graph, s: Var, pairs: &[(usize, usize, f64)]) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let hi: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let lo: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let a = g.gather(s, &hi)?;
    let b = g.gather(s, &lo)?;
    let diff = g.sub(a, b)?;
    let ls = g.log_sigmoid(diff);
    let w = g.constant(Tensor::vector(pairs.iter().map(|p| -p.2).collect()));
    let weighted = g.mul(ls, w)?;
    Ok(g.sum(weighted))
}

fn ordered_pairs(y: &[f64]) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..y.len()).flat_map(move |i| (0..y.len()).filter(move |&j| y[i] > y[j]).map(move |j| (i, j)))
}

/// Pairwise logistic loss over every pair with `y_i > y_j`.
pub fn ranknet_loss(g: &mut Graph, labels: &[f64], mask: Option<&[bool]>, scores: Var) -> Result<Var> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let pairs: Vec<_> = ordered_pairs(&y).map(|(i, j)| (i, j, 1.0)).collect();
    weighted_pair_loss(g, s, &pairs)
}

/// `|ΔNDCG@k|` from swapping items `i` and `j` in the ranking of `scores`,
/// for every pair with `y_i > y_j`. `None` when the ideal DCG is zero.
pub fn lambdarank_weights(labels: &[f64], scores: &[f64], k: usize) -> Result<Option<Vec<(usize, usize, f64)>>> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let ideal = ideal_dcg_at_k(labels, k);
    if ideal <= 0.0 {
        return Ok(None);
    }
    let positions = hard_sort_desc(scores)?.positions();
    let disc = |p: usize| if p <= k { discount(p) } else { 0.0 };
    Ok(Some(
        ordered_pairs(labels)
            .map(|(i, j)| {
                let delta = (gain(labels[i]) - gain(labels[j])) * (disc(positions[i]) - disc(positions[j]));
                (i, j, delta.abs() / ideal)
            })
            .collect(),
    ))
}

/// Pairwise logistic loss weighted by constant `|ΔNDCG@k|` swap weights.
pub fn lambdarank_loss(
    g: &mut Graph,
    labels: &[f64],
    mask: Option<&[bool]>,
    scores: Var,
    k: usize,
) -> Result<Option<Var>> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let current = g.value(s).data().to_vec();
    match lambdarank_weights(&y, &current, k)? {
        Some(pairs) => weighted_pair_loss(g, s, &pairs).map(Some),
        None => Ok(None),
    }
}

/// LambdaRank with weights fixed in advance (indices into the valid items).
pub fn lambdarank_loss_with_weights(
    g: &mut Graph,
    labels: &[f64],
    mask: Option<&[bool]>,
    scores: Var,
    weights: &[(usize, usize, f64)],
) -> Result<Var> {
    let (_, s) = valid_items(g, labels, mask, scores)?;
    weighted_pair_loss(g, s, weights)
}

/// Listwise softmax cross-entropy `−Σ (y_i/Σy) · log softmax(ŷ)_i`.
pub fn softmax_loss(g: &mut Graph, labels: &[f64], mask: Option<&[bool]>, scores: Var) -> Result<Option<Var>> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let row = g.reshape(s, &[1, y.len()])?;
    let logp = g.log_softmax_rows(row);
    let w = g.constant(Tensor::matrix(1, y.len(), y.iter().map(|v| -v / total).collect()));
    let weighted = g.mul(logp, w)?;
    Ok(Some(g.sum(weighted)))
}

/// Row-wise cross-entropy between the exact sort permutation of the labels
/// and the relaxed sort of the scores: `−(1/L) Σ_i log P̂[i, π*_i]`.
pub fn neuralsort_ce_loss(g: &mut Graph, labels: &[f64], mask: Option<&[bool]>, scores: Var, tau: f64) -> Result<Var> {
    let (y, s) = valid_items(g, labels, mask, scores)?;
    let n = y.len();
    let target = hard_sort_desc(&y)?;
    let logits = neuralsort_logits(g, s, tau, n)?;
    let logp = g.log_softmax_rows(logits);
    let flat: Vec<usize> = target.ranks().iter().enumerate().map(|(i, &c)| i * n + c).collect();
    let picked = g.gather(logp, &flat)?;
    let total = g.sum(picked);
    Ok(g.scale(total, -1.0 / n as f64))
}

/// Builds the configured loss; `None` when the query must be skipped.
pub fn build_loss(
    g: &mut Graph,
    labels: &[f64],
    mask: Option<&[bool]>,
    scores: Var,
    cfg: &LossConfig,
) -> Result<Option<Var>> {
    if cfg.k == 0 {
        return Err(Error::Cutoff {
            k: 0,
            len: labels.len(),
        });
    }
    match cfg.kind {
        LossKind::PirankNdcg => pirank_ndcg_loss(g, labels, mask, scores, cfg),
        LossKind::PirankArp => pirank_arp_loss(g, labels, mask, scores, cfg),
        LossKind::Mse => mse_loss(g, labels, mask, scores).map(Some),
        LossKind::RankNet => ranknet_loss(g, labels, mask, scores).map(Some),
        LossKind::LambdaRank => lambdarank_loss(g, labels, mask, scores, cfg.k),
        LossKind::Softmax => softmax_loss(g, labels, mask, scores),
        LossKind::NeuralSortCe => neuralsort_ce_loss(g, labels, mask, scores, cfg.tau).map(Some),
    }
}
