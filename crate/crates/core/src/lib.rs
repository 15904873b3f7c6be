//! Multiscale toolkit for Lévy-walk swarm search.
//!
//! * [`coefficients`]: closure constants and scaling exponents of the macroscopic models.
//! * [`levy`]: the run-time law, its sampler and the Laplace-expansion check.
//! * [`microsim`]: agent-based simulation with tumbling, alignment and elastic collisions.
//! * [`fracpde`]: spectral solver for the fractional diffusion limit and the coverage functional.
//! * [`alignment`]: field-level alignment closure coupled to the density equation.
//! * [`hyper`]: explicit solver for the hyperbolic swarming system.
//! * [`experiments`]: coverage study, micro/macro cross-validation, configs and output layout.

// `!(x > 0.0)` guards also reject NaN; index loops walk several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alignment;
pub mod coefficients;
pub mod experiments;
pub mod error;
pub mod fracpde;
pub mod hyper;
pub mod levy;
pub mod microsim;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
