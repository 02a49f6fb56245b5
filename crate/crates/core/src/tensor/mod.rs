//! Dense tensors and a define-by-run reverse-mode autodiff graph.
//!
//! The graph is rebuilt on every forward pass; nodes are recorded in
//! insertion order and backward visits them in exact reverse order, so a
//! value consumed by several ops accumulates the sum of all incoming
//! gradient contributions. Everything is generic over the scalar type:
//! `f32` for training, `f64` for finite-difference gradient checking.

mod base;
mod conv;
mod gradcheck;
mod graph;
mod linalg;
pub mod loss;
mod ops;
mod pool;
mod scalar;

pub use base::Tensor;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Graph, VarId};
pub use loss::softmax_stable;
pub use scalar::Scalar;

use thiserror::Error;

/// Errors raised by tensor construction and graph operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid dimensions {shape:?}: {reason}")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: non-finite value produced (checked mode)")]
    NonFinite { op: &'static str },
    #[error("gradient probe produced non-finite value at coordinate {coordinate} of {param}")]
    NonFiniteProbe { param: String, coordinate: usize },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, TensorError>;
