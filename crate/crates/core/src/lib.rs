//! Newton-type federated optimization with compressed Hessian learning.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: dense symmetric matrices, eigendecomposition, SPD solves and
//!   the projection onto `{M : M ⪰ μI}`.
//! * [`compress`]: matrix and vector compression operators (Top-K, Rank-R,
//!   Rand-K, random dithering) together with their declared classes.
//! * [`oracle`]: finite-sum problems (regularized logistic regression and a
//!   quadratic fixture) exposing per-device values, gradients and Hessians.
//! * [`data`]: LibSVM ingestion, partitioning across devices and the
//!   heterogeneous synthetic generator.
//! * [`methods`]: the round engines and the run loop.
//! * [`accounting`]: bit costs of every transmitted message and the per-round
//!   trace.
//!
//! Randomness always flows through [`rng::StreamKey`], so a run is a pure
//! function of its configuration and seed regardless of thread count.

// Negated float comparisons such as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod compress;
pub mod data;
mod error;
pub mod linalg;
pub mod methods;
pub mod oracle;
pub mod rng;

pub use accounting::{BitPolicy, MessageKind, Trace, TraceRecord};
pub use compress::{CompressedMatrix, CompressedVector, CompressorClass, CompressorKind, CompressorSpec};
pub use data::{Dataset, DeviceData, PartitionPlan, SyntheticSpec};
pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, SpdFactor, SymmetricMatrix};
pub use methods::{run, HessianInit, Method, MethodConfig, Reference, RunOptions, UpdateOption};
pub use oracle::{LogisticRegression, Problem, Quadratic};

/// Dense column vector used for models and gradients.
pub type Vector = nalgebra::DVector<f64>;
