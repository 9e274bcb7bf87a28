//! Optimistic least-squares value iteration for confounded episodic MDPs.
//!
//! The crate is layered bottom-up: [`mdp`] holds tabular instances and the
//! exact causal oracles, [`features`] embeds them linearly, [`ridge`] keeps the
//! per-step regularized Gram matrices, [`dovi`] and [`dovi_plus`] are the two
//! learners, and [`experiments`] drives sweeps and writes results.

pub mod config;
pub mod dovi;
pub mod dovi_plus;
pub mod error;
pub mod experiments;
pub mod features;
mod learner;
pub mod mdp;
pub mod report;
pub mod ridge;
pub mod rng;

pub use config::{AlgoConfig, Mode, ValueCap};
pub use error::{Error, Result};
pub use mdp::{AdjustmentMode, ConfoundedMdp, Policy, Trajectory};
pub use report::RegretReport;
