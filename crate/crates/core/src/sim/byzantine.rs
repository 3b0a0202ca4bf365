use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::base::{rng_stream, AgentId};
use crate::error::{invalid, Result};
use crate::flprotocols::UpdateHook;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Attack {
    /// Multiply the update by `factor`.
    Scale { factor: f64 },
    /// Negate the update.
    SignFlip,
    /// Replace the update with Gaussian noise.
    RandomNoise { std: f64 },
}

/// Agents whose outgoing FL updates are replaced by an attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSpec {
    pub corrupt_agents: Vec<usize>,
    pub attack: Attack,
}

impl ByzantineSpec {
    pub fn validate(&self, agents: usize) -> Result<()> {
        let mut ids = self.corrupt_agents.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.corrupt_agents.len() {
            return Err(invalid("corrupt agents listed twice"));
        }
        if let Some(&m) = ids.iter().find(|&&m| m >= agents) {
            return Err(invalid(format!("corrupt agent {m} does not exist")));
        }
        if ids.len() >= agents {
            return Err(invalid("at least one agent must stay honest"));
        }
        match self.attack {
            Attack::Scale { factor } if !factor.is_finite() => Err(invalid("scale factor must be finite")),
            Attack::RandomNoise { std } if !(std.is_finite() && std >= 0.0) => {
                Err(invalid("noise std must be finite and nonnegative"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_corrupt(&self, agent: usize) -> bool {
        self.corrupt_agents.contains(&agent)
    }
}

/// [`UpdateHook`] applying a [`ByzantineSpec`] during one FL call.
pub struct AttackHook<'a> {
    pub spec: &'a ByzantineSpec,
    pub seed: u64,
    /// Distinguishes FL calls, e.g. `"fl/epoch/3"`.
    pub label: String,
}

impl UpdateHook for AttackHook<'_> {
    fn transform(&self, agent: AgentId, round: usize, delta: &mut [f64]) {
        if !self.spec.is_corrupt(agent.index()) {
            return;
        }
        match self.spec.attack {
            Attack::Scale { factor } => delta.iter_mut().for_each(|v| *v *= factor),
            Attack::SignFlip => delta.iter_mut().for_each(|v| *v = -*v),
            Attack::RandomNoise { std } => {
                let mut s = rng_stream(self.seed, &format!("byzantine/{}/agent/{agent}/round/{round}", self.label));
                for v in delta.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut s);
                    *v = std * z;
                }
            }
        }
    }
}
