//! Sequential-measurement contextuality toolkit.
//!
//! Quantum systems are simulated with the Lüders rule; hidden-variable models
//! implement the same [`system::MeasurementSystem`] interface so that every
//! inequality and diagnostic runs unchanged on either.

pub mod catalog;
pub mod compat;
pub mod engine;
pub mod error;
pub mod hv;
pub mod inequalities;
pub mod linalg;
pub mod noise;
pub mod sequence;
pub mod state;
pub mod stats;
pub mod system;
pub mod tolerances;

pub use error::{Error, Result};
