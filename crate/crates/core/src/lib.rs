//! Multiuser mmWave beam-allocation simulator.
//!
//! The pipeline runs from channel synthesis on a uniform planar array,
//! through DFT beam sweeps that produce beam images, to beam prediction,
//! least-squares effective-channel estimation and joint beam/power
//! allocation.

pub mod allocator;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod interchange;
pub mod predictor;
pub mod sweep;

pub use error::{Error, Result};
