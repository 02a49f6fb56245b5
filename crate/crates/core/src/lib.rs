//! Object-level relational reasoning for video activity recognition.
//!
//! The crate builds a small two-head spatio-temporal convolutional trunk on
//! top of a from-scratch reverse-mode autodiff engine, pools per-object
//! descriptors from instance masks, reasons over inter-frame object pairs
//! with a learned pairwise relation integrated by a gated recurrent unit,
//! and trains the whole thing on deterministic synthetic videos of
//! interacting 2-D shapes whose labels are functions of object interactions
//! over time.

pub mod ablate;
pub mod backbone;
pub mod checkpoint;
pub mod clipsample;
pub mod config;
pub mod context;
pub mod dataset;
pub mod evaluate;
pub mod graphexport;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod train;
pub mod descriptors;
pub mod nn;
pub mod reasoning;
pub mod recognition;
pub mod rle;
pub mod tensor;

pub use tensor::{Graph, Scalar, Tensor, TensorError, VarId};
