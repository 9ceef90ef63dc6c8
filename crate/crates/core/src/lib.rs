//! Lattice laboratory for quantitative stochastic homogenization: random
//! conductance fields, massive Green functions, annealed moment estimates,
//! sensitivity and spectral-gap checks, fluctuation scaling and the
//! Lipschitz-in-the-large statistic.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealed;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod fluctuations;
pub mod green;
pub mod lattice;
pub mod profile;
pub mod regularity;
pub mod seed;
pub mod sensitivity;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
