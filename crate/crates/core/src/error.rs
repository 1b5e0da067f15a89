//! Error types shared by the library modules.

use crate::scalar::Real;

/// Library-wide result alias.
pub type Result<T, R> = std::result::Result<T, Error<R>>;

/// Errors raised by time-scale construction, calculus and solvers.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error<R: Real> {
    #[error("invalid time scale: {0}")]
    InvalidScale(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("t = {t} is not in the time scale (nearest segment is [{lo}, {hi}])")]
    NotInScale { t: R, lo: R, hi: R },

    #[error("t = {t} is not a grid point of the time scale")]
    NotGridPoint { t: R },

    #[error("t = {t} lies outside {domain}")]
    OutsideDomain { t: R, domain: &'static str },

    #[error("t = {t} is a junction point where the jump operators lose differentiability")]
    Junction { t: R },

    #[error("time scale is not admissible: {count} junction point(s), first at t = {first}")]
    NotAdmissible { count: usize, first: R },

    #[error("no dense neighbour sample available at t = {t}")]
    Structural { t: R },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid functions live on different time scales")]
    GridMismatch,

    #[error("symplectic pairing needs an even dimension, got {dim}")]
    OddDimension { dim: usize },

    #[error("Newton iteration failed at t = {t}: residual {residual} after {iters} iterations")]
    NewtonDiverged { t: R, iters: usize, residual: R },

    #[error("Picard iteration did not converge: sweep delta {delta} after {sweeps} sweeps")]
    PicardDiverged { sweeps: usize, delta: R },

    #[error("non-finite value produced by {what}")]
    NonFinite { what: &'static str },

    #[error("too many evaluation failures: {failed} of {total} samples")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{0}")]
    Parse(#[from] crate::expr::ParseError),
}
