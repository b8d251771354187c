//! Numerical toolkit for the time-dependent radiative transport equation:
//! a discrete-ordinates upwind solver for the forward and linearized source
//! problems, energy diagnostics, weighted (Carleman-type) inequality
//! evaluation, and an experiment harness that measures both-sided stability
//! ratios between coefficient perturbations and outflow boundary data.

// Validation uses negated comparisons (`!(x > 0.0)`) on purpose: NaN must
// fail every precondition, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod carleman;
pub mod coefficients;
pub mod config;
pub mod energy;
pub mod error;
pub mod io;
pub mod mesh;
pub mod phase;
pub mod pipeline;
pub mod quad;
pub mod solver;
pub mod stability;
pub mod velocity;

pub use error::{Error, Result};
