//! Divide-and-conquer construction of the top-k rows of the relaxed sort.
//!
//! The (padded) score list of length `L = b_1·…·b_d` is viewed as the leaves
//! of a tree with branching `b_j` at height `j`. Level `j` merges the
//! `k_{j−1}`-long value lists of `b_j` children with the unimodal relaxation
//! and keeps the top `k_j` rows. The compounded relaxed permutation of the
//! root maps the `k` output ranks back onto the `L` leaves.
//!
//! With `b_j ≈ L^{1/d}` and minimal widths the cost is
//! `O(L^{1+1/d} + (d−1)·k²·L)` instead of the `O(L²)` of a flat relaxation.
//!
//! # Layout
//!
//! Leaf `t` (0-based) has tree coordinates `i_1..i_d` with
//! `t = Σ_j i_j·Π_{l<j} b_l`, so `i_1` varies fastest and every run of `b_1`
//! consecutive leaves forms one level-1 node. At level `j` there are
//! `G_j = Π_{l>j} b_l` nodes, stored in that same fastest-first order:
//!
//! * `y`: shape `(G_j, k_j)`, relaxed top-`k_j` scores of each node;
//! * `p`: shape `(G_j, k_j, L_j)` with `L_j = b_1·…·b_j`, the relaxed
//!   permutation rows of each node over the leaves beneath it.
//!
//! Within a merge, candidate `c = q·k_{j−1} + m` is rank `m` of child `q`.
//! The softmax of each output rank runs over all `k_{j−1}·b_j` candidates of
//! its node.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::relaxsort::{check_tau, unimodal_logits, vector_len, RelaxedPermutation};
use crate::tensor::Tensor;

/// Factorization, widths and temperatures driving the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct DncPlan {
    len: usize,
    branching: Vec<usize>,
    widths: Vec<usize>,
    temperatures: Vec<f64>,
}

/// Smallest `b` with `b^depth ≥ len`.
fn integer_root_ceil(len: usize, depth: usize) -> usize {
    let reaches = |b: usize| {
        let mut acc: usize = 1;
        for _ in 0..depth {
            acc = acc.saturating_mul(b);
            if acc >= len {
                return true;
            }
        }
        acc >= len
    };
    let mut b = (len as f64).powf(1.0 / depth as f64).floor().max(1.0) as usize;
    while b > 1 && reaches(b - 1) {
        b -= 1;
    }
    while !reaches(b) {
        b += 1;
    }
    b
}

/// Builds a plan: explicit branching when given, otherwise `d` equal
/// factors `ceil(L^{1/d})` with the list padded to their product.
/// Widths are minimal and temperatures uniform.
pub fn make_plan(
    len: usize,
    k: usize,
    depth: usize,
    tau: f64,
    explicit_branching: Option<&[usize]>,
) -> Result<DncPlan> {
    match explicit_branching {
        Some(b) => DncPlan::with_branching(len, k, b.to_vec(), tau),
        None => DncPlan::new(len, k, depth, tau),
    }
}

impl DncPlan {
    pub fn new(len: usize, k: usize, depth: usize, tau: f64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Plan("depth must be at least 1".into()));
        }
        if len == 0 {
            return Err(Error::Empty);
        }
        let b = integer_root_ceil(len, depth);
        Self::with_branching(len, k, vec![b; depth], tau)
    }

    pub fn with_branching(len: usize, k: usize, branching: Vec<usize>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if len == 0 {
            return Err(Error::Empty);
        }
        if k == 0 || k > len {
            return Err(Error::Cutoff { k, len });
        }
        if branching.is_empty() || branching.contains(&0) {
            return Err(Error::Plan(format!(
                "branching factors must be positive, got {branching:?}"
            )));
        }
        let product = branching
            .iter()
            .try_fold(1usize, |acc, &b| acc.checked_mul(b))
            .ok_or_else(|| Error::Plan("branching product overflows".into()))?;
        if product < len {
            return Err(Error::Plan(format!(
                "branching {branching:?} covers {product} leaves, need {len}"
            )));
        }
        let mut widths = vec![1];
        for &b in &branching {
            let prev = *widths.last().unwrap();
            widths.push(k.min(prev * b));
        }
        let temperatures = vec![tau; branching.len()];
        Ok(Self {
            len,
            branching,
            widths,
            temperatures,
        })
    }

    /// Geometric temperature cascade `τ_j = τ·ratio^{j−d}` (`ratio ≥ 1`).
    pub fn with_temperature_ratio(mut self, ratio: f64) -> Result<Self> {
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(Error::Plan(format!("temperature ratio must be ≥ 1, got {ratio}")));
        }
        let d = self.depth();
        let tau = self.tau();
        for (j, t) in self.temperatures.iter_mut().enumerate() {
            *t = tau * ratio.powi(j as i32 + 1 - d as i32);
        }
        self.validate()?;
        Ok(self)
    }

    /// Keeps up to `slack` extra rows at every intermediate level.
    pub fn with_slack(mut self, slack: usize) -> Result<Self> {
        let d = self.depth();
        for j in 1..d {
            let max = self.widths[j - 1] * self.branching[j - 1];
            self.widths[j] = (self.k().min(max) + slack).min(max);
        }
        // the root keeps exactly k
        self.validate()?;
        Ok(self)
    }

    /// Explicit per-level temperatures `τ_1..τ_d`.
    pub fn with_temperatures(mut self, temperatures: Vec<f64>) -> Result<Self> {
        if temperatures.len() != self.depth() {
            return Err(Error::Plan(format!(
                "{} temperatures for depth {}",
                temperatures.len(),
                self.depth()
            )));
        }
        self.temperatures = temperatures;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let k = self.k();
        for j in 1..=self.depth() {
            let max = self.widths[j - 1] * self.branching[j - 1];
            if self.widths[j] < k.min(max) || self.widths[j] > max {
                return Err(Error::Plan(format!(
                    "width k_{j}={} outside [{}, {max}]",
                    self.widths[j],
                    k.min(max)
                )));
            }
        }
        for &t in &self.temperatures {
            check_tau(t)?;
        }
        if self.temperatures.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Plan(format!(
                "temperatures must be nondecreasing with height: {:?}",
                self.temperatures
            )));
        }
        Ok(())
    }

    /// Number of real (unpadded) items.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn padded_len(&self) -> usize {
        self.branching.iter().product()
    }

    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    pub fn k(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Root temperature `τ = τ_d`.
    pub fn tau(&self) -> f64 {
        *self.temperatures.last().unwrap()
    }

    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    /// `k_0..k_d`.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// `τ_1..τ_d`.
    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    /// Nodes at height `j` (`G_j`).
    pub fn groups(&self, level: usize) -> usize {
        self.branching[level..].iter().product()
    }

    /// Leaves beneath one node at height `j` (`L_j`).
    pub fn leaves_per_node(&self, level: usize) -> usize {
        self.branching[..level].iter().product()
    }
}

/// Relaxed scores and compounded permutation rows after some level.
#[derive(Debug, Clone, Copy)]
pub struct LevelState {
    pub level: usize,
    /// `(G_j, k_j)`
    pub y: Var,
    /// `(G_j, k_j, L_j)`
    pub p: Var,
}

/// Score used for padded leaves at temperature `tau`.
///
/// A negative power of two at least `10·(range + 1) + 64·τ` below every
/// score, so each padded leaf trails every real one by a logit margin of at
/// least 64 and takes no measurable mass in the top `k ≤ L` rows. Being
/// piecewise constant in the scores, it contributes no gradient either.
pub fn padding_value(scores: &[f64], tau: f64) -> f64 {
    let m = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    -(m + 10.0 * (2.0 * m + 1.0) + 64.0 * tau).log2().ceil().exp2()
}

/// Extends `scores` to the plan's padded length with a constant sentinel.
pub fn pad_scores(g: &mut Graph, scores: Var, plan: &DncPlan) -> Result<Var> {
    let len = vector_len(g, scores)?;
    if len != plan.len() {
        return Err(Error::Plan(format!("plan built for {} items, got {len}", plan.len())));
    }
    let extra = plan.padded_len() - len;
    if extra == 0 {
        return Ok(scores);
    }
    let fill = padding_value(g.value(scores).data(), plan.tau());
    let pad = g.constant(Tensor::full(&[extra], fill));
    Ok(g.concat(&[scores, pad], 0)?)
}

/// Level-0 state: every leaf is its own node holding one score.
pub fn reshape_leaves(g: &mut Graph, padded: Var, plan: &DncPlan) -> Result<LevelState> {
    let len = vector_len(g, padded)?;
    if len != plan.padded_len() {
        return Err(Error::Plan(format!(
            "expected {} padded scores, got {len}",
            plan.padded_len()
        )));
    }
    let y = g.reshape(padded, &[len, 1])?;
    let p = g.constant(Tensor::ones(&[len, 1, 1]));
    Ok(LevelState { level: 0, y, p })
}

/// Merges the children of every node at height `level`.
pub fn dnc_level(g: &mut Graph, state: LevelState, plan: &DncPlan, level: usize) -> Result<LevelState> {
    let depth = plan.depth();
    if level == 0 || level > depth || state.level + 1 != level {
        return Err(Error::Level { level, depth });
    }
    let b = plan.branching()[level - 1];
    let k_prev = plan.widths()[level - 1];
    let k_next = plan.widths()[level];
    let groups = plan.groups(level);
    let child_leaves = plan.leaves_per_node(level - 1);
    let n = k_prev * b;

    let merged = g.reshape(state.y, &[groups, n])?;
    let logits = unimodal_logits(g, merged, k_next, plan.temperatures()[level - 1])?;
    let q = g.softmax_rows(logits); // (G, k_next, n)

    let merged_col = g.reshape(merged, &[groups, n, 1])?;
    let y = g.batch_matmul(q, merged_col)?;
    let y = g.reshape(y, &[groups, k_next])?;

    // P_next[g, l, q·L' + t] = Σ_m Q[g, l, q·k_prev + m] · P[g·b + q, m, t]
    let q4 = g.reshape(q, &[groups, k_next, b, k_prev])?;
    let q4 = g.permute(q4, &[0, 2, 1, 3])?;
    let q3 = g.reshape(q4, &[groups * b, k_next, k_prev])?;
    let p = g.batch_matmul(q3, state.p)?; // (G·b, k_next, L')
    let p = g.reshape(p, &[groups, b, k_next, child_leaves])?;
    let p = g.permute(p, &[0, 2, 1, 3])?;
    let p = g.reshape(p, &[groups, k_next, b * child_leaves])?;

    Ok(LevelState { level, y, p })
}

/// Runs every level and returns the root state.
pub fn dnc_root(g: &mut Graph, scores: Var, plan: &DncPlan) -> Result<LevelState> {
    let padded = pad_scores(g, scores, plan)?;
    let mut state = reshape_leaves(g, padded, plan)?;
    for level in 1..=plan.depth() {
        state = dnc_level(g, state, plan, level)?;
    }
    Ok(state)
}

/// Top-`k` relaxed permutation rows over the padded list (`k × L_padded`).
///
/// Columns past `plan.len()` belong to padding; callers give them zero gain.
pub fn dnc_topk(g: &mut Graph, scores: Var, plan: &DncPlan) -> Result<RelaxedPermutation> {
    let root = dnc_root(g, scores, plan)?;
    let rows = g.reshape(root.p, &[plan.k(), plan.padded_len()])?;
    Ok(RelaxedPermutation {
        rows,
        k: plan.k(),
        columns: plan.padded_len(),
        tau: plan.tau(),
    })
}

/// Predicted multiply-add count of one forward pass.
///
/// Per level: the pairwise spread of every merge (`G_j·n_j²`), the logits and
/// softmax (`2·G_j·k_j·n_j`), the score contraction (`G_j·k_j·n_j`) and the
/// permutation contraction (`G_j·k_j·n_j·L_{j−1}`), with `n_j = k_{j−1}·b_j`.
pub fn count_ops(plan: &DncPlan) -> u64 {
    (1..=plan.depth())
        .map(|j| {
            let groups = plan.groups(j) as u64;
            let n = (plan.widths()[j - 1] * plan.branching()[j - 1]) as u64;
            let k = plan.widths()[j] as u64;
            let child = plan.leaves_per_node(j - 1) as u64;
            groups * (n * n + 3 * k * n + k * n * child)
        })
        .sum()
}
