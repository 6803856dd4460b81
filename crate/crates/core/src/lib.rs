//! Phase-transition prediction and verification for ℓ1 recovery with
//! additional convex priors.
//!
//! * [`geometry`]: separable subdifferentials and normal cones, exact
//!   projections onto their scaled Minkowski sums.
//! * [`statdim`]: closed-form `ψ` curves, error brackets, the transition
//!   window, and Monte-Carlo estimators of the statistical dimension.
//! * [`solvers`]: ADMM for the recovery programs plus a brute-force LP
//!   oracle for tiny instances.
//! * [`experiments`]: randomized recovery sweeps over `(m, s)`, crossing
//!   estimation and CSV/SVG output.

// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod numeric;
pub mod rng;
pub mod solvers;
pub mod statdim;
pub mod verify;

pub use error::{Error, Result};
