//! Data-driven stochastic Koopman spectral models for discrete-time
//! mean-field systems, and a receding-horizon controller that runs in the
//! lifted coordinates.
//!
//! The pipeline runs bottom up:
//! [`dynamics`] simulates the aggregated system `y = (x, μ, u, ρ)`,
//! [`spectral`] estimates spectral measures of observable pairs,
//! [`model`] turns detected atoms into eigenfunctions and expansion
//! coefficients, and [`mpc`] optimizes controls over the learned model.
//! [`harness`] holds benchmark systems, oracles and experiment runners.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod model;
pub mod mpc;
pub mod numeric;
pub mod observables;
pub mod spectral;

pub use error::{Error, Result};
