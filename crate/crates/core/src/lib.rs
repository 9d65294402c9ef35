//! Simulation of Ethereum's validator queues, liquid staking and restaking,
//! with stake-concentration analytics.
//!
//! - [`chain`]: epoch-stepped beacon chain with churn-limited entry/exit queues.
//! - [`queue`]: closed-form wait-time estimator over a tiered churn table.
//! - [`pool`]: share-accounted liquid staking pool with oracle rebases.
//! - [`restake`]: restaking operators, AVS opt-ins, slashing and security margins.
//! - [`analytics`]: Nakamoto coefficient, HHI and Gini over attributed stake.
//! - [`scenario`]: TOML-driven runner producing deterministic CSV outputs.

pub mod analytics;
pub mod chain;
pub mod pool;
pub mod queue;
pub mod restake;
pub mod scenario;
pub mod units;

pub use units::{EntityId, Epoch, Gwei, ValidatorId};
