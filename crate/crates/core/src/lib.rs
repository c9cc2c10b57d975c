//! Numerical laboratory for the inviscid Burgers equation driven by
//! fractional Brownian initial velocity.
//!
//! The crate is organized by subsystem:
//!
//! * [`paths`] samples fBm and integrated fBm on uniform grids.
//! * [`envelopes`] builds discrete convex minorants/majorants and the slope
//!   functionals used by the persistence argument.
//! * [`burgers`] solves the Burgers problem through the convex minorant of
//!   the potential and cross-checks it with a sticky-particle simulation.
//! * [`fractal`] estimates box-counting dimensions.
//! * [`persistence`] runs persistence-probability Monte-Carlo experiments.
//! * [`rkhs`] computes finite-grid kernel-space norms and trend shifts.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod burgers;
pub mod envelopes;
pub mod error;
pub mod fractal;
pub mod paths;
pub mod persistence;
pub mod rkhs;
pub mod rng;
pub mod stats;

pub use error::{LabError, Result};
pub use paths::{GridPath, HurstIndex, PathKind, SampleGrid};
pub use rng::RandomnessSpec;
