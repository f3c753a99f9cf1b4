//! Discrete tomography with counting-factor subproblems.
//!
//! The crate reconstructs images with labels `0..k` from ray sums
//! `Ax = b` while minimizing a pairwise grid energy. It provides two
//! dual lower bounds obtained by decomposing the problem into one
//! subproblem per ray:
//!
//! * **CTG** — every ray is solved exactly as a one-dimensional
//!   tomography problem with the counting-factor tree in [`chain`].
//! * **STD** — every ray is solved over the local polytope with the ray
//!   sum enforced in expectation ([`std_oracle`]).
//!
//! Both bounds are maximized by dual ascent over Lagrange multipliers
//! ([`dual`]), feasible reconstructions come from label pruning plus an
//! exact reduced search ([`primal`]), and [`dual::bnb`] closes the gap by
//! branch and bound.

pub mod chain;
pub mod dual;
mod error;
pub mod instance;
pub mod minsum;
pub mod pipeline;
pub mod primal;
pub mod report;
pub mod std_oracle;

pub use error::{Error, Result};
pub use instance::{Direction, Labeling, Pairwise, Ray, TomographyInstance};
