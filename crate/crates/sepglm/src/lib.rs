//! Poisson GLMs for binned spike-train data that stay well-behaved when the
//! likelihood has no finite maximizer.
//!
//! Spike-train regressions routinely contain *perfect predictors*: covariate
//! columns (or linear combinations of columns) that are nonzero only on bins
//! with zero spikes. The Poisson log-likelihood then increases monotonically
//! as those coefficients drift to negative infinity, and plain iteratively
//! reweighted least squares never converges. This crate provides:
//!
//! - binned spike/stimulus containers, CSV loaders, and a reproducible
//!   synthetic-data simulator ([`data`]);
//! - design-matrix construction with history lags and stimulus bands
//!   ([`design`]);
//! - exact detection of perfect predictors, including generated linear
//!   combinations, plus a structural-vs-sampling classification heuristic
//!   ([`separation`]);
//! - a Newton/IRLS engine over a penalized Poisson objective with sentinel
//!   (`±inf`) coefficient support ([`glm`]);
//! - seven fitting strategies that tolerate separation: a fixed iteration
//!   limit, the sentinel maximum-likelihood limit, Bayesian maximum a
//!   posteriori with a smoothing prior, ridge-style shrinkage, a cardinal
//!   spline change of basis, likelihood search over a bounded ball, and
//!   score-threshold freezing ([`strategies`], [`spline`]);
//! - goodness-of-fit tooling: deviance ratios, cross-validated deviance
//!   ratios, effective degrees of freedom, time-rescaling KS analysis,
//!   trial-resampling bootstrap intervals, and parameter correlations
//!   ([`gof`]);
//! - report rendering, SVG plots, and a TOML-driven pipeline used by the
//!   `sepglm` command-line binary ([`report`], [`svg`], [`config`],
//!   [`runner`]).
//!
//! The `examples/` directory contains one runnable walkthrough per major
//! capability; start with `simulate_and_detect`.

pub mod config;
pub mod data;
pub mod design;
pub mod error;
pub mod glm;
pub mod gof;
pub mod mem;
pub mod report;
pub mod runner;
pub mod separation;
pub mod spline;
pub mod strategies;
pub mod svg;

pub use error::{Error, Result};
