//! Simulation and parameter estimation for a transmon coupled to a multimode
//! surface-acoustic-wave cavity.
//!
//! Units throughout: linear MHz for frequencies, rates and couplings; μs for
//! time. See [`model`] for the conventions.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analytic;
pub mod engine;
pub mod fitting;
pub mod model;
pub mod operators;
pub mod presets;
pub mod reset;
pub mod tof;
