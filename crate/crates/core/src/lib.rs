//! Boundary asymptotics of blow-up solutions of Δu = f(u) on the unit ball.
//!
//! This crate classifies nonlinearities by whether all blow-up solutions
//! share one boundary rate, computes that rate via a contractive velocity
//! iteration, expands it to higher order, and cross-checks everything
//! against a direct radial ODE solver.

// `!(x > 0.0)` rejects NaN along with nonpositive values; the positive
// comparison suggested by the lint would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criterion;
pub mod error;
pub mod expansion;
pub mod expr;
pub mod nonlinearity;
pub mod numerics;
pub mod powerlaw;
pub mod shoot;
pub mod threeterm;

pub use error::{Error, Result};
