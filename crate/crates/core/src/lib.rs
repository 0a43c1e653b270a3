//! Moment-level PI and integral control of stochastic reaction networks.
//!
//! The crate is organised around the pieces needed to design, analyse and
//! simulate in-silico controllers acting on the first two moments of a
//! chemical reaction network:
//!
//! - [`network`]: mass-action networks, propensities, closed moment equations
//!   for affine networks and Foster-Lyapunov drift certificates.
//! - [`moments`]: the concrete moment ODEs (gene expression, its normalized
//!   and bilinear forms, the delayed loop, the open dimerization system) and
//!   a fixed-step RK4 integrator.
//! - [`control`]: positive PI, multivariable PI and integral laws, in
//!   continuous and sampled form.
//! - [`analysis`]: closed-form stability, robustness and admissibility tests.
//! - [`ssa`]: exact stochastic simulation of independent cell populations
//!   under sampled feedback.
//! - [`scenario`]: JSON scenario files and the built-in presets.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analysis;
pub mod control;
mod error;
pub mod linalg;
pub mod moments;
pub mod network;
pub mod scenario;
pub mod schedule;
pub mod ssa;

pub use error::{Error, Result};
