//! Conditional normalizing flows for amortized posterior and likelihood
//! estimation: affine coupling blocks with fixed alternating masks for
//! multivariate targets, and a conditional affine chain for scalar targets.
//! Gradients are back-propagated analytically; training is plain
//! minibatch descent with per-parameter second-moment scaling.

pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod io;
pub mod net;
pub mod train;

pub use error::FlowError;
pub use flow::{ConditionalFlow, FlowConfig};
pub use train::{train, train_joint, LossTrace, TrainConfig};

pub type Flow = ConditionalFlow<f64>;
