//! Normal forms, frequency geometry, Diophantine-set measures and
//! effective-stability scans for Hamiltonians near a Diophantine invariant
//! torus `H(theta, I) = omega.I + O(|I|^2)`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod config;
pub mod diophantine;
pub mod dioset;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod normal_form;
pub mod pipeline;
pub mod poly;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
pub use series::{FtSeries, MajorantNorm, Shape, TruncationLoss};
