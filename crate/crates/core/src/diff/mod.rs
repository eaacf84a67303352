//! Reverse-mode differentiation, parameter storage, Adam, and gradient checks.

mod check;
pub mod checkpoint;
mod matrix;
mod optim;
mod params;
mod tape;

pub use check::{finite_diff_check, finite_diff_check_with_floor, GradCheckReport};
pub use matrix::Matrix;
pub use optim::Adam;
pub use params::{Bound, ParamId, ParamStore, TargetParams};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("non-finite value propagated through `{primitive}`")]
    NonFinite { primitive: &'static str },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
