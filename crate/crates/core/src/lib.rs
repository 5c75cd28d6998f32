//! Simultaneous inference on covariance and precision matrices of
//! long-range-dependent multivariate Gaussian linear processes.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] describes coefficient sequences `A_t` and computes analytic
//!   ground truth (autocovariances, covariance, precision, the closed-form
//!   covariance of the Gaussian reference vector).
//! * [`simulate`] draws realisations with the circulant-embedding FFT method.
//! * [`estimate`] holds the sample covariance/precision estimators.
//! * [`bootstrap`] builds block-bootstrap distributions, quantiles and
//!   simultaneous confidence regions.
//! * [`gaussref`] samples `|Z|_inf` from a closed-form covariance.
//! * [`metrics`] computes two-sample Kolmogorov and Wasserstein-1 distances.
//! * [`harness`] runs Monte-Carlo grids and writes CSV tables.
//! * [`pipeline`] is the real-data workflow: ingestion, long-memory
//!   diagnostics, per-subject edge tests and group aggregation.

pub mod bootstrap;
pub mod error;
pub mod estimate;
pub mod gaussref;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use nalgebra::DMatrix;
