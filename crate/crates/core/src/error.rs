use thiserror::Error;

use crate::autodiff::AutodiffError;

/// Errors from the sorting relaxations and loss builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("cutoff k={k} outside 1..={len}")]
    Cutoff { k: usize, len: usize },
    #[error("empty score vector")]
    Empty,
    #[error("not a permutation of 0..{len}: {ranks:?}")]
    NotAPermutation { ranks: Vec<usize>, len: usize },
    #[error("invalid divide-and-conquer plan: {0}")]
    Plan(String),
    #[error("level {level} outside 1..={depth}")]
    Level { level: usize, depth: usize },
    #[error("labels ({labels}) and scores ({scores}) differ in length")]
    LengthMismatch { labels: usize, scores: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
