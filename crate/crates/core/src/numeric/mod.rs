//! Dense tensors, reverse-mode differentiation, gradient checking and
//! checkpoint archives.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use checkpoint::Archive;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck, REL_ERROR_FLOOR};
pub use graph::{log_sum_exp, sigmoid, Graph, Unary, Var};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
