//! Self-supervised learning-to-optimize toolkit for parametric mixed-integer
//! nonlinear programs: a reverse-mode autodiff tape with surrogate-gradient
//! support, benchmark problem families, small MLPs, differentiable integer
//! correction layers, penalty-based training, gradient-based feasibility
//! projection, and reference baselines.

pub mod autodiff;
pub mod baselines;
pub mod correction;
pub mod error;
pub mod net;
pub mod problems;
pub mod projection;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{CoreError, Result};
pub use tensor::TensorValue;
