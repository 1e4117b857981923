//! Directed polymers in a random environment and their deterministic KPZ
//! scaling limit.
//!
//! The crate computes the polymer surface exactly on finite cone-shaped
//! regions, the deterministic heat and Cole–Hopf oracles it converges to, and
//! the Monte Carlo machinery used to compare the two.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colehopf;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod mix;
pub mod noise;
pub mod polymer;
pub mod quadrature;
pub mod scaling;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
