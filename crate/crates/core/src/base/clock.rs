use serde::{Deserialize, Serialize};

use super::AgentId;
use crate::error::{invalid, Result};

/// Per-agent integer step rates: agent `m` takes `rates[m]` local steps per
/// global step, so `t_m(t) = rates[m] * t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockMap {
    rates: Vec<u64>,
}

impl ClockMap {
    pub fn new(rates: Vec<u64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(invalid("clock map needs at least one agent"));
        }
        if rates.contains(&0) {
            return Err(invalid("clock rates must be positive"));
        }
        Ok(Self { rates })
    }

    /// All agents advance in lockstep with the global clock.
    pub fn synchronous(agents: usize) -> Result<Self> {
        Self::new(vec![1; agents])
    }

    pub fn agents(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, agent: AgentId) -> Result<u64> {
        self.rates
            .get(agent.index())
            .copied()
            .ok_or_else(|| invalid(format!("unknown agent {agent}")))
    }

    pub fn rates(&self) -> &[u64] {
        &self.rates
    }

    /// Local time of `agent` when the global time is `global_t`.
    pub fn local_time(&self, agent: AgentId, global_t: u64) -> Result<u64> {
        Ok(self.rate(agent)? * global_t)
    }
}
