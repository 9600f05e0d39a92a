//! Invariant representation learning.
//!
//! A dense network is trained on `l_target + lambda * l_affinity`, where the
//! affinity term pulls each representation of one group toward its nearest
//! same-class representation of the other group. Around that sit fairness
//! metrics, frozen-representation probes, sensitive-attribute reattachment,
//! dataset loaders, and experiment recipes.

pub mod affinity;
pub mod data;
mod error;
pub mod interpret;
pub mod metrics;
pub mod nn;
pub mod runner;

pub use error::{Error, Result};

/// Row-major batch x width matrix.
pub type Tensor2 = ndarray::Array2<f64>;
