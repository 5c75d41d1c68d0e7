//! Exact ranking metrics over a hard ranking, plus significance testing.
//!
//! A ranking is a [`Permutation`] listing items best first; [`ranking`]
//! builds it from predicted scores with a stable descending sort, so tied
//! scores keep list order. Metrics that are undefined for a query return
//! `None` and the query is skipped in every aggregate.

mod report;
pub mod stats;

pub use report::{compare, lower_is_better, write_comparison_csv, MethodComparison, MetricTable, ReportError};
pub use stats::{paired_t_test, TTest};

use crate::error::Result;
use crate::relaxsort::{hard_sort_desc, Permutation};

/// Stable descending ranking of `scores`.
pub fn ranking(scores: &[f64]) -> Result<Permutation> {
    hard_sort_desc(scores)
}

/// Exponential gain `2^y − 1`.
pub fn gain(label: f64) -> f64 {
    label.exp2() - 1.0
}

/// Position discount `1 / log₂(1 + rank)` for a 1-based rank.
pub fn discount(rank: usize) -> f64 {
    1.0 / ((1 + rank) as f64).log2()
}

fn check_len(labels: &[f64], pi: &Permutation) {
    assert_eq!(labels.len(), pi.len(), "labels and ranking differ in length");
}

/// Relevance-weighted mean rank `Σ_j y_{π_j}·j / Σ_j y_j`. Lower is better.
///
/// `None` when the total relevance is not positive.
pub fn rp(labels: &[f64], pi: &Permutation) -> Option<f64> {
    check_len(labels, pi);
    let total: f64 = labels.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let weighted: f64 = pi
        .ranks()
        .iter()
        .enumerate()
        .map(|(j, &item)| labels[item] * (j + 1) as f64)
        .sum();
    Some(weighted / total)
}

/// DCG of the first `k` ranks (`k` is clamped to the list length).
pub fn dcg_at_k(labels: &[f64], pi: &Permutation, k: usize) -> f64 {
    check_len(labels, pi);
    pi.ranks()
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &item)| gain(labels[item]) * discount(j + 1))
        .sum()
}

/// DCG@k of the labels placed in descending order.
pub fn ideal_dcg_at_k(labels: &[f64], k: usize) -> f64 {
    let k = k.min(labels.len());
    if k == 0 {
        return 0.0;
    }
    let mut top = labels.to_vec();
    if k < top.len() {
        top.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        top.truncate(k);
    }
    top.sort_unstable_by(|a, b| b.total_cmp(a));
    top.iter().enumerate().map(|(j, &y)| gain(y) * discount(j + 1)).sum()
}

/// `DCG@k / ideal DCG@k`; `None` when the ideal DCG is zero.
pub fn ndcg_at_k(labels: &[f64], pi: &Permutation, k: usize) -> Option<f64> {
    let ideal = ideal_dcg_at_k(labels, k);
    if ideal <= 0.0 {
        return None;
    }
    Some(dcg_at_k(labels, pi, k) / ideal)
}

/// Reciprocal rank of the first item with label ≥ 1.
pub fn mrr(labels: &[f64], pi: &Permutation) -> Option<f64> {
    check_len(labels, pi);
    pi.ranks()
        .iter()
        .position(|&item| labels[item] >= 1.0)
        .map(|j| 1.0 / (j + 1) as f64)
}

/// Fraction of pairs with `y_i > y_i'` whose scores satisfy `ŷ_i > ŷ_i'`.
///
/// Tied predictions count as wrong. `None` when no label pair is ordered.
pub fn opa(labels: &[f64], scores: &[f64]) -> Option<f64> {
    assert_eq!(labels.len(), scores.len(), "labels and scores differ in length");
    let mut ordered = 0usize;
    let mut correct = 0usize;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] > labels[j] {
                ordered += 1;
                if scores[i] > scores[j] {
                    correct += 1;
                }
            }
        }
    }
    (ordered > 0).then(|| correct as f64 / ordered as f64)
}

/// All metrics of one query at the given cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub cutoffs: Vec<usize>,
    pub rp: Option<f64>,
    /// One entry per cutoff.
    pub ndcg: Vec<Option<f64>>,
    /// One entry per cutoff.
    pub dcg: Vec<f64>,
    pub mrr: Option<f64>,
    pub opa: Option<f64>,
}

impl QueryMetrics {
    /// Column names in the order of [`QueryMetrics::values`].
    pub fn columns(cutoffs: &[usize]) -> Vec<String> {
        let mut cols = vec!["rp".to_string()];
        cols.extend(cutoffs.iter().map(|k| format!("ndcg@{k}")));
        cols.extend(cutoffs.iter().map(|k| format!("dcg@{k}")));
        cols.push("mrr".into());
        cols.push("opa".into());
        cols
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        let mut v = vec![self.rp];
        v.extend(self.ndcg.iter().copied());
        v.extend(self.dcg.iter().map(|&d| Some(d)));
        v.push(self.mrr);
        v.push(self.opa);
        v
    }
}

/// Ranks by `scores` and evaluates every metric.
pub fn query_metrics(labels: &[f64], scores: &[f64], cutoffs: &[usize]) -> Result<QueryMetrics> {
    if labels.len() != scores.len() {
        return Err(crate::Error::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let pi = ranking(scores)?;
    Ok(QueryMetrics {
        cutoffs: cutoffs.to_vec(),
        rp: rp(labels, &pi),
        ndcg: cutoffs.iter().map(|&k| ndcg_at_k(labels, &pi, k)).collect(),
        dcg: cutoffs.iter().map(|&k| dcg_at_k(labels, &pi, k)).collect(),
        mrr: mrr(labels, &pi),
        opa: opa(labels, scores),
    })
}

/// Mean of the defined values and how many were defined.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    ((n > 0).then(|| sum / n as f64), n)
}
