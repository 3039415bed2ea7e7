//! Dense matrices, reverse-mode gradients and seeded randomness.

mod graph;
mod matrix;
mod rng;

pub use graph::{evaluate, finite_diff_check, gradient, Bindings, Evaluation, Gradients, Graph, NodeId};
pub use matrix::Matrix;
pub use rng::{derive_seed, RngStream};
