//! Numerical laboratory for semilinear Hamilton–Jacobi–Bellman equations
//! driven by a weakly regularizing Ornstein–Uhlenbeck semigroup.
//!
//! The controlled stochastic heat equation with noise and control localized
//! on a subinterval is truncated spectrally ([`spectral`]); its transition
//! semigroup and B-directional derivatives are sampled exactly
//! ([`semigroup`]); the value function and its B-gradient are obtained from a
//! regression Monte Carlo FBSDE solver ([`fbsde`]); feedback controls are
//! synthesized from the B-gradient ([`control`]) and checked against the
//! value ([`verify`]).

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod control;
pub mod cost;
mod dd;
pub mod error;
pub mod exec;
pub mod fbsde;
pub mod hamiltonian;
pub mod heat;
pub mod pde1d;
pub mod regression;
pub mod regularize;
pub mod semigroup;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
