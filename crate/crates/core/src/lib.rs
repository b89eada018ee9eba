//! Empirical and hierarchical Bayes with (approximately) squared-exponential
//! Gaussian process priors, and the frequentist coverage of their credible sets.
//!
//! The sequence-model side ([`signals`], [`gwn`], [`posterior`], [`mmle`],
//! [`hb`], [`credible`]) works with the prior `f_i ~ N(0, a^-1 exp(-i/a))`
//! under observations `Y_i = f_i + Z_i / sqrt(n)`. The function-space side
//! ([`gp_regression`], [`gp_classification`]) uses the kernel
//! `k(s, t) = exp(-a (s - t)^2)` on `[0, 1]`. [`harness`] runs replicated
//! coverage experiments over all of them.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod credible;
pub mod error;
pub mod exec;
pub mod gp_classification;
pub mod gp_regression;
pub mod gwn;
pub mod harness;
pub mod hb;
mod kernel;
pub mod mmle;
pub mod numeric;
pub mod posterior;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};

/// Crate version, embedded in artifact provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
