//! Pathwise numerics for `dx = dW + f(t, x) dt` with bounded Borel drift.
//!
//! The crate computes the objects that pathwise uniqueness arguments are built
//! from: seeded dyadic Brownian paths, occupation functionals of shifted
//! fields, Euler schemes on arbitrary (even anticipating) partitions, Picard
//! iteration for the perturbation equation, heat-kernel quadrature, and Monte
//! Carlo estimators for moment and tail bounds.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dyadic_path;
pub mod error;
pub mod estimators;
pub mod fields;
pub mod kernel_lab;
pub mod occupation;
pub mod rng;
pub mod solver;
pub mod stats;

pub use dyadic_path::{BlockPath, DyadicIndex, DyadicPath, Skeleton};
pub use error::{Error, Result};
pub use fields::{DriftField, ScalarField, SharedDrift, SharedField};
