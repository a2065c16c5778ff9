//! Constant-stepsize SGD for linear least squares with geometric
//! Polyak–Ruppert iterate averaging.
//!
//! The crate is organised around the life of one experiment:
//!
//! * [`problem`] builds a population least-squares problem from a covariance
//!   spectrum and draws data streams from it.
//! * [`sgd`] runs the plain, Tikhonov-regularized and additive-noise SGD
//!   recursions and records every iterate.
//! * [`averaging`] turns a stored trace into uniform, geometric or tail
//!   averages (batch, streaming and sharded forms).
//! * [`risk`] evaluates excess risk, ridge solutions and the finite-time
//!   excess-risk bounds, and checks the expected-iterate equivalences with
//!   ridge regression.
//! * [`regpath`] computes regularization paths from one stored trace and
//!   selects a level on held-out data.
//! * [`experiment`] is the Monte Carlo harness behind the `geoavg` binary.

// NaN must fail range checks, so they are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod error;
pub mod experiment;
pub mod problem;
pub mod regpath;
pub mod risk;
pub mod sgd;
pub mod spectral;
pub mod trace;

pub use averaging::{AveragingScheme, OnlineAverageState, PartialGeometricSum};
pub use error::{GeoAvgError, Result};
pub use problem::{CovariateLaw, Dataset, MomentConstants, ProblemInstance, Sample};
pub use regpath::{PathEntry, PathKey, PathPoint, PathResult};
pub use risk::{BoundInputs, RiskReport};
pub use sgd::{IterateTrace, SgdConfig, SgdMode};
pub use spectral::SpectralMatrix;
pub use trace::Iterates;

/// Dense column vector used for parameters, covariates and moments.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for covariances and bases.
pub type Matrix = nalgebra::DMatrix<f64>;
