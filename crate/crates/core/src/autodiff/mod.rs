//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod conv;
mod gemm;
mod gradcheck;
mod graph;
mod serialize;
mod tensor;

use std::collections::BTreeMap;

use thiserror::Error;

pub use gradcheck::{analytic_grad, central_difference, evaluate, grad_check, relative_error};
pub use graph::{kwta_mask, Graph, SoftRoundSign, Var};
pub use serialize::{read_tensors, write_tensors};
pub use tensor::Tensor;

pub type TensorMap = BTreeMap<String, Tensor>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward needs a one-element loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{len} values cannot fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("tensor container: {0}")]
    Format(String),
}
