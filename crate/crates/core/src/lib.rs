//! Noise-aware quantum signal processing for Hamiltonian simulation, verified
//! against dense oracles at desk scale.
//!
//! The stages are: [`operators`] (Pauli Hamiltonians and rescaling), block
//! encodings ([`block_lcu`], [`block_variational`]), phase design ([`qsp`]),
//! degree selection ([`planner`]), and simulation with post-processing
//! ([`pipeline`]). [`experiment`] wires them into manifest-driven runs.

pub mod block_lcu;
pub mod block_variational;
pub mod circuits;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod operators;
pub mod optim;
pub mod pipeline;
pub mod planner;
pub mod qsp;

pub use error::{Error, Result};
