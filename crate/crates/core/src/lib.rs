//! Simulation of rough differential equations driven by fractional Brownian
//! motion, together with the estimators used to check their fractal and
//! distributional properties empirically.
//!
//! The crate is organised bottom-up:
//!
//! * [`fbm`]: exact synthesis of fBm paths, the covariance and Volterra kernel.
//! * [`rough_path`]: truncated tensor algebra, signatures, p-variation.
//! * [`rde`]: vector-field sets and a rough Taylor solver.
//! * [`dimension`]: box counting, graphs, level sets, energies.
//! * [`density`]: Monte Carlo tails and kernel density estimates.
//! * [`harness`]: declarative experiment specs, runs and reports.

// Guards are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod dimension;
pub mod error;
pub mod fbm;
pub mod harness;
pub mod quadrature;
pub mod rde;
pub mod rng;
pub mod rough_path;
pub mod stats;

pub use error::{Error, Result};
