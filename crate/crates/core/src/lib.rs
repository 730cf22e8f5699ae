//! Unbiased estimation of multivariate cumulants (orders 2-4) from i.i.d.
//! samples.
//!
//! The crate has three layers:
//!
//! - a symbolic layer ([`algebra`], [`conversions`], [`expectation`],
//!   [`derivation`]) that derives unbiased estimators and their exact
//!   variances as rational functions of the sample size `m`;
//! - a numeric layer ([`estimators`]) that evaluates the named estimators
//!   on real or complex sample batches with compensated summation;
//! - a Monte Carlo layer ([`simulation`]) with seedable, per-repeat
//!   random streams for reproducible benchmarking.

pub mod algebra;
pub mod conversions;
pub mod derivation;
pub mod error;
pub mod estimators;
pub mod expectation;
pub mod simulation;
pub mod vars;

pub use error::{Error, Result};
