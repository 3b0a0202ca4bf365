//! Shared domain types used by every other module.

mod clock;
mod rng;
mod schedule;

pub use clock::ClockMap;
pub use rng::{rng_stream, Stream};
pub use schedule::{EpochMode, EpochSchedule, GammaMode, GammaSchedule};

use serde::{Deserialize, Serialize};

/// Index of an agent in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub usize);

impl AgentId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One bandit interaction: the observed context, the pulled arm and its reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub context: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// Samples one agent collected during one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDataset {
    pub agent: AgentId,
    /// 1-based epoch index.
    pub epoch: usize,
    pub samples: Vec<Sample>,
}

impl EpochDataset {
    pub fn new(agent: AgentId, epoch: usize) -> Self {
        Self {
            agent,
            epoch,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
