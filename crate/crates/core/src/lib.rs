//! Strip-weighted fractional p-Laplacian eigenvalues on an interval and
//! their convergence to the classical Steklov eigenvalue as s → 1⁻.
//!
//! The pipeline is [`mesh`] → [`forms`] → [`eigen`], with [`reference`]
//! supplying the local limit and [`harness`] / [`report`] running the
//! experiments. Parallel assembly is behind the default `parallel` feature;
//! results do not depend on the thread count.

// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod forms;
pub mod gauss;
pub mod harness;
pub mod kernel;
pub mod mesh;
mod par;
pub mod reference;
pub mod report;

pub use error::{Error, Result};
