//! Reliability diagnostics for two-parameter simultaneous root-finding schemes.
//!
//! The crate sweeps an `(alpha, beta)` parameter grid, runs seeded solver
//! ensembles at every cell, turns the log step-norm micro-series into a
//! kNN forecast-error stability profile, scores each profile for early
//! contractivity and trains multi-horizon regressors that predict the final
//! score from short profile prefixes.
//!
//! Module map:
//!
//! * [`solver`]: polynomial problems, the pluggable iteration map, trajectories and ensembles.
//! * [`profiler`]: micro-series and the kNN-LLE proxy profile.
//! * [`metrics`]: `S_min`/`S_mom` scores, timing statistics and the cost model.
//! * [`dataset`]: prefix datasets, horizon schedules and train/test splits.
//! * [`regression`]: the five regression families and their evaluation.
//! * [`validation`]: per-iteration root error and empirical convergence order.
//! * [`pipeline`]: configuration, staged execution, artifacts and plots.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod profiler;
pub mod regression;
pub mod seed;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
