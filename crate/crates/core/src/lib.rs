//! Graph-based offline actor-critic planning for multi-echelon supply networks.
//!
//! The differentiable core is generic over [`Scalar`]; the aliases below fix
//! it to `f64`, the precision used by simulation, training and data code.

pub mod actor_critic;
pub mod baselines;
pub mod diff;
pub mod gat;
pub mod netmodel;
pub mod pipeline;
pub mod scalar;
pub mod sim;
pub mod synth;
pub mod trainer;

pub use scalar::Scalar;

pub type Matrix = diff::Matrix<f64>;
pub type Tape = diff::Tape<f64>;
pub type ParamStore = diff::ParamStore<f64>;
pub type Adam = diff::Adam<f64>;
