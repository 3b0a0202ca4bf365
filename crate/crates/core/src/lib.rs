//! Federated contextual bandits driven by inverse gap weighting.
//!
//! Agents interact with contextual-bandit environments in epochs. Inside an
//! epoch every agent samples actions from an inverse-gap-weighted
//! distribution built from the current reward estimate; at the epoch
//! boundary the collected data is handed to a pluggable federated learning
//! routine (FedAvg, SCAFFOLD, FedProx, LSGD-PFL, one-shot ridge or
//! distributed accelerated gradient descent) that produces the estimate
//! used in the next epoch.
//!
//! Module map:
//! - [`base`]: agent ids, samples, epoch/learning-rate schedules, clocks and seeded streams.
//! - [`models`]: linear and two-layer MLP reward models with losses and gradients.
//! - [`policies`]: IGW, greedy, softmax, epsilon-greedy and uniform action selection.
//! - [`flcore`]: the weighted empirical-risk problem and server aggregators.
//! - [`flprotocols`]: the FL routines and their communication accounting.
//! - [`envs`]: synthetic linear / personalized worlds and multi-label datasets.
//! - [`sim`]: the epoch loop, regret accounting and Byzantine attacks.

pub mod base;
pub mod envs;
mod error;
pub mod flcore;
pub mod flprotocols;
pub mod linalg;
pub mod models;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};
