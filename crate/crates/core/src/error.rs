//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Result`]. The variants
//! distinguish the failure modes a caller can react to: bad input syntax,
//! domain violations, numerical non-convergence, and the structural failures
//! of the velocity iteration (start point too small, contraction lost).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Input text (a nonlinearity spec or an expression) failed to parse.
    /// `pos` is a byte offset into the offending string.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// No positivity threshold could be found for an expression nonlinearity.
    #[error("threshold search failed: {0}")]
    Threshold(String),

    /// An input violates a documented precondition (wrong range, wrong sign,
    /// mismatched profiles, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An expression could not be evaluated at a point (division by zero,
    /// logarithm of a non-positive value, fractional power of a negative).
    #[error("evaluation error: {0}")]
    Eval(String),

    /// A quadrature or ODE routine failed to converge, met a non-finite
    /// value, or exhausted its subdivision budget.
    #[error("numerics error: {0}")]
    Numerics(String),

    /// A root finder was called without a sign change on the bracket.
    #[error("bracketing error: {0}")]
    Bracket(String),

    /// The tail condition at the iteration start point failed: the velocity
    /// iteration needs a larger start point to stay contractive.
    #[error("iteration start point {u_start} too small: {msg}")]
    StartPointTooSmall { u_start: f64, msg: String },

    /// An iterate left the trust ball around the zeroth-order velocity.
    #[error("iterate left the contraction ball: sup |v/v0 - 1| = {sup}")]
    BallViolation { sup: f64 },

    /// Iterate-to-iterate deviations stopped decreasing.
    #[error("contraction failure: deltas {deltas:?} not decreasing")]
    ContractionFailure { deltas: Vec<f64> },

    /// The Keller–Osserman integral diverged where a finite value was
    /// required.
    #[error("Keller-Osserman integral diverges from {lo}")]
    KellerOssermanDivergent { lo: f64 },

    /// Blow-up radius calibration failed (no bracket, or the bisection
    /// budget ran out).
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A series operation produced a logarithm: a term with evaluation
    /// exponent exactly -1 was integrated. `order` is the series index of
    /// the offending term.
    #[error("resonance at series order {order}: exponent {exponent} integrates to a logarithm")]
    Resonance { order: usize, exponent: f64 },
}
