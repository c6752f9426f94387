//! Minimal deterministic reverse-mode array engine.
//!
//! Provides exactly the operations the four networks and their losses need:
//! dense matmul, 1-D convolution, max pooling, the three activations, MSE
//! and L1 losses, a fused LSTM layer, reverse-mode [`Graph::backward`], and
//! an Adam optimizer. Everything is `f64`, shapes are checked eagerly, and
//! nothing broadcasts silently.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
mod ndarray;
pub mod vmath;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use graph::{Activation, Gradients, Graph, NodeId};
pub use ndarray::NdArray;
