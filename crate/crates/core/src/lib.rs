//! Quantitative model of dangerous-capability testing.
//!
//! A suite of tests is summarised by a piecewise-constant *test sensitivity*
//! function over a one-dimensional danger axis. The estimate of a system's
//! danger is the supremum of the levels at which some test passed; tests
//! above the system's latent danger always fail. Under that model the
//! estimate follows a truncated law whose reverse hazard rate is the
//! sensitivity function, so the estimator, its bias, its threshold
//! detection behaviour and its lag all have closed forms.
//!
//! Modules:
//!
//! * [`sensitivity`]: [`RateFunction`], the step-function sensitivity.
//! * [`estimator`]: the estimator law and its outcome metrics.
//! * [`dynamics`]: capability trajectories and the incremental-testing chain.
//! * [`allocation`]: budget schedules, the linear production function and
//!   allocation policies, coupled to the chain step by step.
//! * [`oracle`]: a brute-force Bernoulli grid model used to cross-check the
//!   closed forms.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! The `parallel` feature runs ensembles and oracle draws on rayon; results
//! are bit-identical to the sequential path.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod allocation;
pub mod dynamics;
mod error;
pub mod estimator;
mod exec;
mod math;
pub mod oracle;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
pub use estimator::{Bias, EstimatorDistribution, LagLaw, LagMean};
pub use sensitivity::{RateFunction, Segment, ValidationReport, Violation};
