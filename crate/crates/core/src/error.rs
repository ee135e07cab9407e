//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by system construction, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A system definition violates a structural constraint
    /// (empty stoichiometry, nonpositive coefficient, exponent out of range).
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// An input value lies outside the operation's domain
    /// (negative concentration, norm exponent below one, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The mass vector admits no positive equilibrium.
    #[error("degenerate mass vector: {0}")]
    DegenerateMass(String),

    /// A state the algorithm guarantees cannot occur was observed.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    /// Parameters are mutually inconsistent (e.g. interpolation exponent
    /// outside (0,1)).
    #[error("inconsistent parameters: {0}")]
    InconsistentParameters(String),

    /// Time stepping could not find an admissible step size.
    #[error("stiffness: {0}")]
    Stiffness(String),

    /// The inner linear solver failed to converge.
    #[error("linear solver: {0}")]
    LinearSolver(String),

    /// Not enough usable data for a regression or quadrature.
    #[error("fit error: {0}")]
    Fit(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
