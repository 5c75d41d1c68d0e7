//! Learning to rank with differentiable sorting relaxations.
//!
//! A reverse-mode tape ([`autodiff`]) carries the relaxed permutation
//! matrices of [`relaxsort`] and the divide-and-conquer top-k of
//! [`topk_dnc`] into ranking surrogates ([`losses`]). [`model`] trains a
//! per-item MLP on LETOR or synthetic data ([`data`]) and [`metrics`] scores
//! and compares the resulting rankings.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod relaxsort;
pub mod scaling;
pub mod tensor;
pub mod topk_dnc;

pub use autodiff::{Graph, Var};
pub use data::{QueryGroup, SyntheticConfig};
pub use error::{Error, Result};
pub use losses::{LossConfig, LossKind};
pub use metrics::{MetricTable, QueryMetrics};
pub use model::{Mlp, MlpConfig, ModelError, TrainConfig};
pub use relaxsort::{Permutation, RelaxedPermutation};
pub use tensor::Tensor;
pub use topk_dnc::DncPlan;
