//! Risk-averse distributional actor-critic learning.
//!
//! A sample-generating critic learns the full return distribution with a
//! quantile-Huber loss; the deterministic actor ascends the lower-tail CVaR of
//! that distribution. Around the learner sit a replay pool, two small
//! continuous-control environments, an action-disturbance robustness
//! evaluation, and CSV reporting.

pub mod agent;
pub mod envsim;
pub mod error;
pub mod gradnet;
pub mod harness;
pub mod replay;
pub mod retdist;
pub mod rng;
pub mod selftest;

pub use error::{Error, Result};
