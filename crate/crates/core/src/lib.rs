//! Simulation and verification library for reaction-diffusion systems with
//! porous-medium diffusion.
//!
//! The crate covers the full pipeline for the single reversible mass-action
//! reaction and for general dissipative systems:
//!
//! - [`network`]: system definitions, structural condition checks
//!   (mass dissipation, quasi-positivity, polynomial growth) and the
//!   exponent thresholds for existence and boundedness;
//! - [`equilibrium`]: conserved masses and the unique positive
//!   detailed-balance equilibrium, with an independent entropy-minimization
//!   cross-check;
//! - [`exponents`]: the bootstrap calculus of integrability exponents
//!   (smoothing exponents, recursions, fixed points, step counts);
//! - [`grid`]: unit-measure cell-centered meshes and no-flux discrete
//!   operators;
//! - [`solver`]: nonnegativity- and conservation-preserving time stepping
//!   (explicit and semi-implicit);
//! - [`entropy`]: entropy/entropy-production functionals, functional
//!   inequality diagnostics, decay-rate fitting and growth diagnostics.
//!
//! With the default `parallel` feature the cell loops and sampling sweeps
//! run on rayon; disabling it yields a dependency-light sequential build.
//! The [`kernels`] module exposes both code paths for benchmarking.

// `!(x > 0.0)`-style guards are used throughout so NaN inputs fail
// validation instead of slipping through an inverted comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod equilibrium;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod kernels;
pub mod network;
pub mod solver;

pub use error::{Error, Result};
