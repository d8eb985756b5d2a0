//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid domain object (negative counts, non-stochastic rows, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Operation requires a parent-independent mutation model.
    #[error("operation requires a parent-independent (PIM) mutation model: {0}")]
    NotPim(String),

    /// Operation requires an irreducible mutation transition matrix.
    #[error("mutation transition matrix is reducible: {0}")]
    Reducible(String),

    /// Feature is outside the supported domain (e.g. quadrature dimension).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A state space or symbolic solve exceeds the configured budget.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A linear system that should be regular turned out singular.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// Pade denominator system is singular; carries the largest solvable
    /// denominator degree.
    #[error("degenerate Pade table: largest solvable denominator degree is {largest_v}")]
    DegeneratePade { largest_v: usize },

    /// Evaluation requested inside a certified pole enclosure.
    #[error("evaluation at rho = {rho} lies inside a certified denominator-root enclosure")]
    Pole { rho: String },

    /// Numerical iteration failed to reach the requested tolerance.
    #[error("numeric non-convergence: {0}")]
    NonConvergence(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
