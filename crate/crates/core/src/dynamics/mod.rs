//! How latent danger grows and how the estimate follows it.
//!
//! [`CapabilityTrajectory`] maps discrete steps to latent danger.
//! [`EstimateChainState::advance`] is the incremental-testing update: test
//! results persist between steps, so only tests that became applicable (or
//! were newly added) can move the estimate. [`run_chain`] drives an ensemble
//! of independent paths and aggregates empirical metrics.

mod chain;
mod trajectory;

pub use chain::{run_chain, ChainConfig, ChainEnsemble, EstimateChainState, LagHistogram, RateSchedule, UpdateMode};
pub use trajectory::{CapabilityTrajectory, Jump, TimeMap, TrajectoryKind};
