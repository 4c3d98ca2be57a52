//! Exact intersection theory of weighted ψ-classes on Hassett spaces.
//!
//! Everything is computed over the rationals with arbitrary precision:
//!
//! - [`partitions`]: weight data, totally unstable set partitions, chamber signatures.
//! - [`witten`]: Witten–Kontsevich correlators on `M̄_{g,n}` with a memo table.
//! - [`cycles`]: decorated pinwheel strata, the closed pull-back formula and the
//!   inductive multiplication rule used to cross-check it.
//! - [`numbers`]: Hassett correlators as signed partition sums.
//! - [`potentials`]: truncated generating functions, fork operators and the
//!   diagonal change of variables.

pub mod cycles;
pub mod error;
pub mod numbers;
pub mod partitions;
pub mod potentials;
pub mod rational;
pub mod witten;

pub use error::{Error, Result};
pub use num_rational::BigRational;
