//! Dense feed-forward networks with reverse-mode gradients.

pub mod checkpoint;
mod layer;
pub mod loss;
mod network;
mod optim;

pub use layer::{sigmoid, softmax_rows, Activation, DenseLayer};
pub use loss::{cross_entropy_from_logits, cross_entropy_loss, predicted_classes};
pub use network::{init_network, ArchitectureSpec, ForwardTrace, GradientSet, Network};
pub use optim::{Optimizer, OptimizerKind, OptimizerSettings};
