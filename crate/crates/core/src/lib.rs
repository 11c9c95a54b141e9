//! Time-dependent Gaussian variational approximations (leading-order large-N and
//! Hartree) to a pair of biquadratically coupled quantum oscillators, chaos
//! diagnostics for the resulting classical flows, and an exact split-operator
//! solution of the two-dimensional Schrödinger equation to measure their
//! breakdown.

pub mod chaos;
pub mod error;
pub mod integrators;
pub mod model;
pub mod schrodinger;
pub mod variational;

pub use error::{Error, Result};
