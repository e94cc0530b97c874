//! Pseudo-spectral simulator and verification harness for forced (stochastic)
//! hyperdissipative Navier–Stokes equations written in self-similar variables.

pub mod background;
pub mod cli_io;
pub mod error;
pub mod nonuniqueness;
pub mod operators;
pub mod semigroups;
pub mod spectral_core;
pub mod spectrum;
pub mod stochastic;
pub mod util;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
