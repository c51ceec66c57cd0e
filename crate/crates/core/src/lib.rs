//! Gaussian-process prior meta-training with certified interval inclusion.
//!
//! Prior hyperparameters are fitted across many related regression tasks so
//! that both the prior interval `m(x) +- q sqrt(k(x, x))` and each task's
//! posterior interval contain the true function value with probability at
//! least `1 - delta`, backed by a concentration lower bound computed from
//! held-out evaluation points.

pub mod bounds;
pub mod error;
pub mod eval;
pub mod gp;
pub mod rng;
pub mod taskgen;
pub mod train;

pub use error::{Error, Result};
pub use gp::{HyperParams, Interval, Jitter, Posterior};
