//! A small dense tensor library with tape-free reverse-mode automatic
//! differentiation.
//!
//! Every [`Tensor`] is an immutable, reference-counted node holding a
//! row-major `f64` buffer. Operations on tensors that require gradients
//! record their parents and a backward closure; [`Tensor::backward`] walks
//! the resulting DAG in reverse topological order and accumulates gradients
//! into the leaves.
//!
//! Broadcasting is deliberately limited to adding a tensor whose shape is a
//! suffix of the other operand's shape ([`Tensor::add_trailing`]).

mod autograd;
mod error;
pub mod gradcheck;
pub mod io;
mod ops;
mod tensor;

pub use autograd::{is_grad_enabled, no_grad};
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GradMismatch};
pub use ops::GELU_COEFF;
pub use tensor::Tensor;
