//! Asymptotic complexity of a two-spin-glass model of GAN loss surfaces.
//!
//! The crate is organised by stage:
//! - [`params`]: hyperparameters and derived constants;
//! - [`rmt`]: random-matrix and spin-glass samplers used as Monte-Carlo oracles;
//! - [`spectral`]: limiting spectral density and its log potential;
//! - [`complexity`]: the complexity exponents, index maps and sweeps;
//! - [`cli`]: the command-line front end.

pub mod error;
pub mod params;
pub mod quad;
pub mod rmt;
pub mod spectral;
pub mod complexity;
pub mod output;
pub mod cli;

pub use error::{Error, Result};
