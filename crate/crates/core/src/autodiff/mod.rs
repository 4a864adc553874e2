//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation applied to its nodes. [`Graph::backward`]
//! computes parameter gradients; [`Graph::grad`] with `create_graph = true`
//! records the gradient computation itself, which is how the critic's
//! input-gradient penalty gets differentiated with respect to the critic's
//! weights.
//!
//! Convolutions use the cross-correlation convention (no kernel flip).

mod graph;
pub mod kernels;
mod ops;
mod real;
mod tensor;

pub use graph::{GradientMap, Graph, Var};
pub use kernels::ConvGeom;
pub use ops::Op;
pub use real::Real;
pub use tensor::Tensor;
