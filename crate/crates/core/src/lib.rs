//! Exact simulation and numerical verification toolkit for anisotropic
//! fractional Brownian sheets and their local times.
//!
//! The crate is organized in three layers. The bottom layer is generic
//! numerics: adaptive quadrature (`quad`), special functions (`special`),
//! a counter-based random number generator (`rng`), dense symmetric linear
//! algebra (`linalg`), and log-log regression (`fit`). The middle layer is
//! the model itself: covariance kernels and region decompositions
//! (`field_model`), finite-dimensional Gaussian sampling and conditioning
//! (`gaussian`), the Hölder-exponent arithmetic (`exponents`), local-time
//! estimators (`local_time`), and moment quadratures (`moments`). The top
//! layer (`verifier`) runs identity, inequality, and scaling-law suites
//! and reports verdicts through the types in `check`.
//!
//! Everything is deterministic given a seed: random streams are pure
//! functions of (master seed, stream id, draw index), replica work is
//! merged in index order, and no operation reads ambient state.

pub mod check;
pub mod error;
pub mod exponents;
pub mod field_model;
pub mod fit;
pub mod gaussian;
pub mod hurst;
pub mod linalg;
pub mod local_time;
pub mod moments;
pub mod quad;
pub mod rng;
pub mod special;
pub mod verifier;

pub use error::{Error, Result};
