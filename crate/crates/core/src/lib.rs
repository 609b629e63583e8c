//! Tensors, models, oblivious kernels and differentially private training
//! primitives.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod data;
pub mod dp;
pub mod error;
pub mod nn;
pub mod oblivious;
pub mod parallel;
pub mod real;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tensor::{matmul, Tensor};
