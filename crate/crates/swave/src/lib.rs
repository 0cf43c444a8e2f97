//! Numerical laboratory for controlled stochastic wave equations on an
//! exhaustively enumerated binary-tree Brownian filtration.
//!
//! The crate is organised bottom-up:
//!
//! * [`tree`]: binary-tree filtration, adapted fields, martingale representation.
//! * [`spatial`]: 1D grid, divergence-form operator, discrete Sobolev norms.
//! * [`carleman`]: weight function checks, weight fields, pointwise identity residual.
//! * [`solvers`]: forward and backward schemes for the four systems.
//! * [`control`]: Gramian, HUM synthesis, reduction checks, negative experiments.

// `!(x <= tol)` is used on purpose so that NaN fails a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod control;
mod error;
pub mod solvers;
pub mod spatial;
pub mod tree;

pub use error::{Error, Result};
