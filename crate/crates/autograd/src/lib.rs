//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine records every operation on a [`Var`] into an implicit graph of
//! reference-counted nodes. Calling [`Var::backward`] on a scalar walks that
//! graph in reverse topological order and returns a [`Gradients`] map keyed by
//! node. Trainable tensors live in a [`ParamStore`] under hierarchical names so
//! that optimizers and checkpoints can address them.
//!
//! Everything runs single-threaded and in a fixed order, so two runs that
//! build the same graph produce bit-identical values and gradients.

mod gemm;
pub mod gradcheck;
mod graph;
mod ops;
pub mod optim;
mod params;
mod tensor;

pub use graph::{is_grad_enabled, no_grad, Gradients, Var};
pub use ops::Conv2dSpec;
pub use params::{Init, Param, ParamPath, ParamStore};
pub use tensor::{broadcast_shape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("{0}")]
    Msg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
