//! Network definitions, activations, exact backpropagation and checkpoints.

mod activation;
mod arch;
pub mod checkpoint;
mod network;

pub use activation::{Activation, ActivationKind};
pub use arch::{
    ArchKind, ArchitectureSpec, DenseLayout, EmbeddingLayout, Layout, DEFAULT_EMBEDDING_DIM,
    DEFAULT_QUAD_TOWER, DEFAULT_TOWER, DEFAULT_WIDE_HIDDEN,
};
pub use network::{logistic_loss, Features, GradientSet, Network, Workspace};
