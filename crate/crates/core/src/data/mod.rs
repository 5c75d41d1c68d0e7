//! Query groups, LETOR text I/O, the synthetic generator and splitting.

mod letor;
mod prep;
mod synthetic;

pub use letor::{parse_letor, read_letor_file, write_letor, ParseOptions};
pub use prep::{pad_truncate, split, MinMaxScaler, TruncatePolicy};
pub use synthetic::{gen_synthetic, Distribution, SyntheticConfig};

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate feature id {fid}")]
    DuplicateFeature { line: usize, fid: usize },
    #[error("query `{qid}` has {len} items, more than the limit {max}")]
    TooLong { qid: String, len: usize, max: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no queries")]
    Empty,
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One query's items: dense features, labels and a validity mask.
///
/// Padded rows have zero features, label 0 and mask `false`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub qid: String,
    /// Row-major `len × num_features`.
    pub features: Vec<f64>,
    pub num_features: usize,
    pub labels: Vec<f64>,
    pub mask: Vec<bool>,
}

impl QueryGroup {
    /// An unpadded group.
    pub fn new(qid: impl Into<String>, features: Vec<f64>, num_features: usize, labels: Vec<f64>) -> Self {
        assert_eq!(features.len(), labels.len() * num_features, "feature matrix shape");
        let mask = vec![true; labels.len()];
        Self {
            qid: qid.into(),
            features,
            num_features,
            labels,
            mask,
        }
    }

    /// Items including padding.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_padded(&self) -> bool {
        self.mask.iter().any(|&m| !m)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    /// `len × num_features` feature matrix.
    pub fn feature_matrix(&self) -> Tensor {
        Tensor::matrix(self.len(), self.num_features, self.features.clone())
    }

    /// `Some(mask)` when the group is padded, for the loss builders.
    pub fn loss_mask(&self) -> Option<&[bool]> {
        self.is_padded().then_some(&self.mask[..])
    }

    /// Labels of the real items only.
    pub fn valid_labels(&self) -> Vec<f64> {
        self.labels
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&y, _)| y)
            .collect()
    }
}
