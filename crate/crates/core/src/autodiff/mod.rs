//! Reverse-mode automatic differentiation over [`crate::tensor::Tensor`] and
//! a central-difference gradient checker.

mod gradcheck;
mod graph;

pub use gradcheck::{gradcheck, gradcheck_block, gradcheck_with_params, GradcheckOptions, GradcheckReport, InputCheck};
pub use graph::{Gradients, Graph, OpKind, Var};
