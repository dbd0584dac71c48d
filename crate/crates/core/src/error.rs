//! Shared error type for the engine.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Caller broke an operation precondition (e.g. obligor already defaulted).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("obligor index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("domain error: {0}")]
    Domain(String),

    /// Two rate-ladder entries coincide within the collision tolerance.
    /// The closed forms require pairwise-distinct aggregate loads, so this is
    /// surfaced instead of silently perturbing inputs.
    #[error("rate collision between ladder entries {i} and {j}: {li} vs {lj} (rel tol {tol})")]
    RateCollision {
        i: usize,
        j: usize,
        li: f64,
        lj: f64,
        tol: f64,
    },

    /// Operation refused because the requested size exceeds what the
    /// algorithm can enumerate.
    #[error("{what} refused: size {got} exceeds limit {limit}")]
    SizeRefusal {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    /// Premium leg annuity is zero over the whole grid.
    #[error("degenerate tranche {tranche}: zero premium-leg annuity")]
    DegenerateTranche { tranche: usize },

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("no root bracketed: {0}")]
    NoRoot(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
