//! Simplicity-regularized maximum likelihood under covariate shift.
//!
//! * [`model_zoo`]: well-specified Gaussian-mean families with exact
//!   derivatives, sampling and analytic source-minimizer sets.
//! * [`regularizers`]: simplicity measures and a convexity/smoothness probe.
//! * [`estimator`]: the regularized objective, the two lambda schedules and a
//!   multi-start Armijo gradient-descent solver with a ridge oracle.
//! * [`analysis`]: Fisher information, pseudoinverses, exact excess risk,
//!   the two excess-risk bounds and assumption probes.
//! * [`rate_lab`]: repeated-trial sweeps over n and log-log rate fits.
//! * [`mlp_lab`]: two-layer MLP experiments comparing weight norms of
//!   generalizing and non-generalizing solutions.
//! * [`config`] / [`runner`]: the flat config format and the CLI driver.

// `!(x > 0.0)` is the idiom for rejecting NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod estimator;
pub mod io;
pub mod mlp_lab;
pub mod model_zoo;
pub mod rate_lab;
pub mod regularizers;
pub mod runner;
pub mod seeding;
