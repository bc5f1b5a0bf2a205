//! Partition-space MCMC for conjugate Dirichlet-process models.
//!
//! Gibbs sweeps, split–merge, and adaptive reconfiguration moves for a
//! Beta–Bernoulli mixture and the infinite relational model, driven by a
//! multi-chain ensemble that reuses its own history to build proposals.

pub mod cli;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod orchestrator;
pub mod partition;
pub mod state;
pub mod sweep;
pub mod trace;

pub use error::{Error, Result};
pub use partition::{CanonicalPartition, Partition};
