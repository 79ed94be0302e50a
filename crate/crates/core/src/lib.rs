//! Quantum trajectories of a coherent wave packet launched along the
//! diagonal periodic orbit of the desymmetrized stadium billiard.
//!
//! Units: `hbar = 1`, particle mass `1/2`, so `H = -lap` and `E = k^2`.
//!
//! The pipeline runs bottom-up:
//!
//! * [`geometry`]: domain, boundary queries, classical rays.
//! * [`spectral`]: Dirichlet eigenpairs on a uniform grid.
//! * [`packet`]: coherent state, projection, exact evolution, field sampling.
//! * [`bohm`]: guidance-equation trajectories with an implicit integrator.
//! * [`survival`]: exact and trajectory-based survival probability, peaks.
//! * [`scar`]: scar functions from energy-window averaging.
//! * [`validation`]: oracle suites against closed-form results.
//! * [`pipeline`]: cached stages, configuration and exports.

// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bohm;
pub mod error;
pub mod geometry;
pub mod packet;
pub mod pipeline;
pub mod scar;
pub mod spectral;
pub mod survival;
pub mod validation;

pub use error::{Error, Result};
pub use geometry::{Billiard, Domain, Rectangle, Region, Vec2};

/// Particle mass.
pub const MASS: f64 = 0.5;
