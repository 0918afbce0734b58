//! Variational Bayesian hierarchical mixture of experts.
//!
//! Binary gating trees route inputs to linear-Gaussian experts. Training
//! fits a factorized posterior over all weights, precisions and gate
//! assignments by coordinate ascent on a lower bound of the log evidence,
//! using a quadratic bound on the logistic sigmoid to keep the gate factors
//! Gaussian. The final bound ranks tree architectures against each other.
//!
//! The crate is `no_std` and needs only `alloc`; file formats, the CLI and
//! parallel sweeps live in the companion `bhme` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod bound;
pub mod dataset;
pub mod engine;
mod error;
pub mod math;
pub mod model;
pub mod predict;
pub mod selection;
pub mod synth;
pub mod topology;

pub use dataset::{Dataset, Standardization};
pub use engine::{train, HmePosterior, TrainConfig, TrainingTrace};
pub use error::{HmeError, Result};
pub use topology::{enumerate_topologies, Shape, TreeTopology};
