//! Robust multivariate location/scatter estimation and real-time outlier
//! detection.
//!
//! The estimator is a deterministic minimum covariance determinant fit: two
//! outlier-resistant starting scatter matrices (wrapped covariance and a
//! redescending spatial-sign covariance) are refined and driven to a local
//! determinant minimum by concentration steps, then reweighted once. The
//! concentration steps can run with incremental rank-one updates of the
//! subset moments, and very large datasets can be split into blocks whose
//! fits are aggregated robustly in parallel.
//!
//! Entry points:
//! * [`estimator::fit_serial`] / [`estimator::flag`] — fit and score.
//! * [`parallel::fit_parallel`] — block-parallel fit for large n.
//! * [`sim`] — synthetic-data scenario runner for accuracy benchmarks.

pub mod concentration;
pub mod error;
pub mod estimator;
pub mod initial;
pub mod matrix;
pub mod parallel;
pub mod refine;
pub mod sim;
pub mod stats;
pub mod univariate;

pub use error::{Error, Result};
pub use estimator::{fit_serial, flag, EstimatorConfig, OutlierReport, ReweightedFit, Variant};
pub use matrix::{DataMatrix, SymMatrix};
pub use parallel::{choose_q, fit_parallel, ParallelConfig};
