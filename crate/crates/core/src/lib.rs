//! Sequential conformal prediction with ellipsoidal regions for multivariate
//! time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: covariance estimation, eigenvalue truncation, pseudo-inverse
//!   quadratic forms, ellipsoid volumes and containment.
//! - [`forecast`]: lag-feature construction and point forecasters.
//! - [`nonconformity`]: the sliding residual window and Mahalanobis-type scores.
//! - [`quantile`]: windowed empirical quantiles and a quantile random forest.
//! - [`spci`]: the sequential ellipsoidal loop with the β-search.
//! - [`baselines`]: coordinate-wise intervals, empirical copula rectangles and
//!   convex hulls.
//! - [`datagen`]: stationary AR/VAR simulators.
//! - [`harness`]: configuration, CSV ingestion, experiment orchestration and
//!   metrics.
//!
//! Data-parallel loops (forest construction, trial fan-out, Monte-Carlo
//! checks) go through [`par`], which uses rayon when the `parallel` feature is
//! enabled and plain iterators otherwise.

pub mod baselines;
pub mod datagen;
pub mod forecast;
pub mod geometry;
pub mod harness;
pub mod nonconformity;
pub mod par;
pub mod quantile;
pub mod series;
pub mod spci;

pub use geometry::{CovarianceEstimate, EllipsoidSpec, TruncatedCovariance};
pub use series::MultiSeries;
pub use spci::{RegionReport, SpciConfig, SpciEngine};
