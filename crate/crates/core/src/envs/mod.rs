//! Bandit environments with bandit feedback: each step yields a context and a
//! sealed reward vector of which only the pulled arm can be revealed.

mod multilabel;
mod synthetic;

pub use multilabel::{parse_multilabel, write_multilabel, MultilabelData, MultilabelEnv, MultilabelExample};
pub use synthetic::SyntheticEnv;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::base::{AgentId, Stream};
use crate::error::{invalid, Error, Result};
use crate::models::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    SyntheticLinear,
    SyntheticPersonalized,
    MultilabelDataset,
}

/// Environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Number of agents `M`.
    pub agents: usize,
    /// Context dimension `d` (synthetic kinds; the last coordinate is a constant intercept feature).
    #[serde(default)]
    pub context_dim: Option<usize>,
    /// Number of arms `K` (synthetic kinds).
    #[serde(default)]
    pub arms: Option<usize>,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Strength of each agent's private context direction (0 = identical context laws).
    #[serde(default = "default_skew")]
    pub context_skew: f64,
    /// Shared parameter count `d^alpha` (personalized kind); the remaining
    /// `d*K - d^alpha` parameters are private to every agent.
    #[serde(default)]
    pub shared_dim: Option<usize>,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
}

fn default_noise() -> f64 {
    0.05
}

fn default_skew() -> f64 {
    0.5
}

impl EnvSpec {
    pub fn synthetic_linear(agents: usize, context_dim: usize, arms: usize) -> Self {
        Self {
            kind: EnvKind::SyntheticLinear,
            agents,
            context_dim: Some(context_dim),
            arms: Some(arms),
            noise_std: default_noise(),
            context_skew: default_skew(),
            shared_dim: None,
            dataset_path: None,
        }
    }

    pub fn synthetic_personalized(agents: usize, context_dim: usize, arms: usize, shared_dim: usize) -> Self {
        Self {
            kind: EnvKind::SyntheticPersonalized,
            shared_dim: Some(shared_dim),
            ..Self::synthetic_linear(agents, context_dim, arms)
        }
    }

    pub fn multilabel(agents: usize, path: impl Into<PathBuf>) -> Self {
        Self {
            kind: EnvKind::MultilabelDataset,
            agents,
            context_dim: None,
            arms: None,
            noise_std: 0.0,
            context_skew: 0.0,
            shared_dim: None,
            dataset_path: Some(path.into()),
        }
    }
}

/// What the metrics layer knows about a step: every arm's expected reward
/// and the optimal arm.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleInfo {
    pub expected: Vec<f64>,
    pub best_action: usize,
}

impl OracleInfo {
    pub fn new(expected: Vec<f64>) -> Self {
        let best_action = crate::policies::argmax(&expected);
        Self { expected, best_action }
    }

    pub fn best_value(&self) -> f64 {
        self.expected[self.best_action]
    }

    /// `mu(x, pi*(x)) - mu(x, a)`.
    pub fn regret(&self, action: usize) -> f64 {
        self.best_value() - self.expected[action]
    }
}

/// One interaction: the public context plus a sealed reward vector.
#[derive(Debug)]
pub struct Step {
    context: Vec<f64>,
    realized: Vec<f64>,
    oracle: OracleInfo,
    revealed: bool,
}

impl Step {
    pub(crate) fn new(context: Vec<f64>, realized: Vec<f64>, oracle: OracleInfo) -> Self {
        Self {
            context,
            realized,
            oracle,
            revealed: false,
        }
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn into_context(self) -> Vec<f64> {
        self.context
    }

    pub fn arms(&self) -> usize {
        self.realized.len()
    }

    /// Reward of the pulled arm. A step can be revealed once.
    pub fn reveal(&mut self, action: usize) -> Result<f64> {
        if self.revealed {
            return Err(Error::InvalidState("step reward already revealed".into()));
        }
        let r = *self
            .realized
            .get(action)
            .ok_or_else(|| invalid(format!("action {action} out of range")))?;
        self.revealed = true;
        Ok(r)
    }

    /// Expected rewards for regret accounting; not for policies.
    pub fn oracle(&self) -> &OracleInfo {
        &self.oracle
    }
}

/// A built environment.
#[derive(Debug, Clone)]
pub enum Environment {
    Synthetic(SyntheticEnv),
    Multilabel(MultilabelEnv),
}

impl Environment {
    pub fn build(spec: &EnvSpec, seed: u64) -> Result<Self> {
        if spec.agents < 1 {
            return Err(invalid("need at least one agent"));
        }
        match spec.kind {
            EnvKind::SyntheticLinear | EnvKind::SyntheticPersonalized => {
                Ok(Environment::Synthetic(SyntheticEnv::new(spec, seed)?))
            }
            EnvKind::MultilabelDataset => {
                let path = spec
                    .dataset_path
                    .as_ref()
                    .ok_or_else(|| invalid("multilabel environment needs dataset_path"))?;
                Ok(Environment::Multilabel(MultilabelEnv::load(path, spec.agents)?))
            }
        }
    }

    pub fn agents(&self) -> usize {
        match self {
            Environment::Synthetic(e) => e.agents(),
            Environment::Multilabel(e) => e.agents(),
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            Environment::Synthetic(e) => e.arms(),
            Environment::Multilabel(e) => e.arms(),
        }
    }

    pub fn context_len(&self) -> usize {
        match self {
            Environment::Synthetic(e) => e.context_dim(),
            Environment::Multilabel(e) => e.context_dim(),
        }
    }

    /// Feature map under which linear models are realizable (synthetic) or
    /// the natural block layout (datasets).
    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::ConcatOnehot {
            context_dim: self.context_len(),
            arms: self.arms(),
        }
    }

    /// Shared-parameter count when the environment has a personalized split.
    pub fn shared_dim(&self) -> Option<usize> {
        match self {
            Environment::Synthetic(e) => e.shared_dim(),
            Environment::Multilabel(_) => None,
        }
    }

    pub fn step(&self, agent: AgentId, stream: &mut Stream) -> Result<Step> {
        if agent.index() >= self.agents() {
            return Err(invalid(format!("unknown agent {agent}")));
        }
        match self {
            Environment::Synthetic(e) => Ok(e.step(agent, stream)),
            Environment::Multilabel(e) => Ok(e.step(stream)),
        }
    }
}
