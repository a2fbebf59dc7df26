//! Minimal reverse-mode differentiation over scalars, vectors and small
//! dense matrices.
//!
//! The tape is define-by-run: a fresh [`Tape`] is built for every example,
//! since the graph shape depends on the number of mentions and candidates.
//! [`grad_check`] validates tape adjoints against central differences.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, GradCheckReport, GRAD_FLOOR};
pub use tape::{argmax, logsumexp_value, softmax_values, top_mask, Axis, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("empty reduced context")]
    EmptyReducedContext,
    #[error("non-finite adjoint at node {node}")]
    NonFiniteAdjoint { node: usize },
    #[error("non-finite function value at probe point")]
    NonFiniteValue,
}
