//! Padding, splitting and feature scaling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, QueryGroup, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncatePolicy {
    /// Keep the first `L_max` items in file order.
    #[default]
    TruncateTail,
    Error,
}

/// Pads a group with masked rows up to `max_len`, or shortens it per policy.
pub fn pad_truncate(group: &QueryGroup, max_len: usize, policy: TruncatePolicy) -> Result<QueryGroup> {
    if max_len == 0 {
        return Err(DataError::Config("list size must be at least 1".into()));
    }
    let m = group.num_features;
    let mut out = group.clone();
    if group.len() > max_len {
        if policy == TruncatePolicy::Error {
            return Err(DataError::TooLong {
                qid: group.qid.clone(),
                len: group.len(),
                max: max_len,
            });
        }
        out.features.truncate(max_len * m);
        out.labels.truncate(max_len);
        out.mask.truncate(max_len);
    } else {
        out.features.resize(max_len * m, 0.0);
        out.labels.resize(max_len, 0.0);
        out.mask.resize(max_len, false);
    }
    Ok(out)
}

/// Seeded shuffle of whole queries, then contiguous train/valid/test parts.
///
/// Sizes are `round(f·n)` for the first two fractions, the rest going to
/// test. A part with a positive fraction that ends up empty is an error.
pub fn split(
    groups: &[QueryGroup],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<QueryGroup>, Vec<QueryGroup>, Vec<QueryGroup>)> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "split fractions must be in [0, 1] and sum to 1, got {fractions:?}"
        )));
    }
    let n = groups.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let sizes = [n_train, n_valid, n - n_train - n_valid];
    for (part, (&f, &size)) in ["train", "valid", "test"].iter().zip(fractions.iter().zip(&sizes)) {
        if f > 0.0 && size == 0 {
            return Err(DataError::Config(format!(
                "{part} split is empty for {n} queries and fraction {f}"
            )));
        }
    }
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| groups[i].clone()).collect();
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_valid),
        take(n_train + n_valid..n),
    ))
}

/// Per-feature affine map onto `[0, 1]`, fitted on real items only.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(groups: &[QueryGroup]) -> Result<Self> {
        let m = groups.first().ok_or(DataError::Empty)?.num_features;
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        for g in groups {
            if g.num_features != m {
                return Err(DataError::Config(format!(
                    "query `{}` has {} features, expected {m}",
                    g.qid, g.num_features
                )));
            }
            for i in (0..g.len()).filter(|&i| g.mask[i]) {
                for (f, &v) in g.row(i).iter().enumerate() {
                    min[f] = min[f].min(v);
                    max[f] = max[f].max(v);
                }
            }
        }
        Ok(Self { min, max })
    }

    /// Constant features map to 0; padded rows stay zero.
    pub fn transform(&self, group: &mut QueryGroup) {
        let m = group.num_features;
        for i in (0..group.len()).filter(|&i| group.mask[i]) {
            for f in 0..m {
                let span = self.max[f] - self.min[f];
                let v = &mut group.features[i * m + f];
                *v = if span > 0.0 { (*v - self.min[f]) / span } else { 0.0 };
            }
        }
    }
}
