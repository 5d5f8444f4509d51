//! Subarray activation for ELAA-assisted integrated sensing and
//! communication: a near/far-field channel simulator, the penalized SCA
//! activation solver, reference baselines and an experiment harness.

pub mod baselines;
pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod precoding;
pub mod rng;
pub mod scenario;
pub mod scene;
pub mod solver;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use metrics::ActivationState;
pub use scenario::Scenario;
