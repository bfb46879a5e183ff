//! Pareto set learning by hypervolume maximization.
//!
//! A neural model maps samples of an arbitrary latent distribution onto the
//! Pareto set of a multi-objective problem. Training maximizes an R2-based
//! hypervolume approximation of the model's output batch; preference-based
//! baselines train the same model on scalarized losses instead.

pub mod error;
pub mod hv;
pub mod network;
pub mod problems;
pub mod sampling;
pub mod scalarization;
pub mod trainer;

pub use error::{Error, Result};
