//! Exact quantum-circuit simulation and a hybrid quantum-classical fusion
//! regressor.
//!
//! The stack, bottom up: [`sim`] (state vectors, density matrices, gate
//! kernels), [`circuit`] (parameterized circuits and the six ansatz
//! layouts), [`encoding`], [`noise`] (Kraus channels), [`nn`] (dense
//! networks), [`qnn`] (the quantum fusion model), [`train`], [`mitigation`]
//! (learned regression mitigation and zero-noise extrapolation),
//! [`pqc_metrics`] and [`data`].

pub mod circuit;
pub mod data;
pub mod encoding;
pub mod error;
pub mod mitigation;
pub mod nn;
pub mod noise;
pub mod pqc_metrics;
pub mod qnn;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
