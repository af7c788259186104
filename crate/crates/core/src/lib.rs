//! Numerical laboratory for sparse bounds of oscillatory singular integrals
//! with polynomial phases.
//!
//! Everything is one-dimensional or planar and lives on uniform cell grids;
//! integrals are midpoint sums unless a module says otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besselmax;
pub mod decomposition;
pub mod dyadic;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod fit;
pub mod kernel;
pub mod operator;
pub mod oscillatory;
pub mod polynomial;
pub mod random;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};

/// Dimensional constant `t_n` (equal to `C_d`) used throughout the experiments.
pub const T_N: i32 = 3;

/// Crate version, embedded in experiment summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
