//! Action-selection rules mapping reward estimates to a distribution over arms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::Stream;
use crate::error::{invalid, Result};

/// Probability vector over the arms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn arms(&self) -> usize {
        self.probs.len()
    }

    pub fn point_mass(arms: usize, arm: usize) -> Self {
        let mut probs = vec![0.0; arms];
        probs[arm] = 1.0;
        Self { probs }
    }

    pub fn uniform(arms: usize) -> Self {
        Self {
            probs: vec![1.0 / arms as f64; arms],
        }
    }
}

/// Which rule agents use to pick arms. IGW takes its gamma from the epoch's
/// [`GammaSchedule`](crate::base::GammaSchedule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyConfig {
    Igw,
    Greedy,
    Softmax {
        #[serde(default = "default_zeta")]
        zeta: f64,
    },
    EpsilonGreedy {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Uniform,
    /// Plays the true optimal arm. Only meaningful for diagnostics: it reads
    /// the environment's expected rewards.
    Oracle,
}

fn default_zeta() -> f64 {
    0.02
}

fn default_epsilon() -> f64 {
    0.05
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyConfig::Softmax { zeta } if !(zeta.is_finite() && zeta > 0.0) => {
                Err(invalid("softmax temperature must be positive"))
            }
            PolicyConfig::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(invalid("epsilon must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::Igw => "igw",
            PolicyConfig::Greedy => "greedy",
            PolicyConfig::Softmax { .. } => "softmax",
            PolicyConfig::EpsilonGreedy { .. } => "epsilon_greedy",
            PolicyConfig::Uniform => "uniform",
            PolicyConfig::Oracle => "oracle",
        }
    }

    /// Distribution for one context. `gamma` is used by IGW only; the oracle
    /// rule is resolved by the simulator and rejected here.
    pub fn distribution(&self, estimates: &[f64], gamma: f64) -> Result<PolicyDistribution> {
        match *self {
            PolicyConfig::Igw => igw_distribution(estimates, gamma),
            PolicyConfig::Greedy => greedy_distribution(estimates),
            PolicyConfig::Softmax { zeta } => softmax_distribution(estimates, zeta),
            PolicyConfig::EpsilonGreedy { epsilon } => epsilon_greedy_distribution(estimates, epsilon),
            PolicyConfig::Uniform => {
                check_estimates(estimates)?;
                Ok(PolicyDistribution::uniform(estimates.len()))
            }
            PolicyConfig::Oracle => Err(invalid("the oracle policy needs the true expected rewards")),
        }
    }
}

fn check_estimates(estimates: &[f64]) -> Result<()> {
    if estimates.is_empty() {
        return Err(invalid("need at least one arm"));
    }
    if estimates.iter().any(|v| !v.is_finite()) {
        return Err(invalid("estimates must be finite"));
    }
    Ok(())
}

/// Index of the largest estimate; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse gap weighting.
///
/// Every arm other than the estimated best `a*` gets `1 / (K + gamma * gap)`
/// with `gap = f(a*) - f(a)`; `a*` receives the remaining mass.
pub fn igw_distribution(estimates: &[f64], gamma: f64) -> Result<PolicyDistribution> {
    check_estimates(estimates)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma must be finite and nonnegative"));
    }
    let k = estimates.len() as f64;
    let best = argmax(estimates);
    let top = estimates[best];
    let mut probs: Vec<f64> = estimates
        .iter()
        .map(|&v| 1.0 / (k + gamma * (top - v)))
        .collect();
    let others: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, p)| p)
        .sum();
    // the remainder is at least 1/K exactly; guard against summation rounding
    probs[best] = (1.0 - others).max(1.0 / k);
    Ok(PolicyDistribution { probs })
}

pub fn greedy_distribution(estimates: &[f64]) -> Result<PolicyDistribution> {
    check_estimates(estimates)?;
    Ok(PolicyDistribution::point_mass(estimates.len(), argmax(estimates)))
}

/// `p ∝ exp(estimates / zeta)`, evaluated after subtracting the maximum.
pub fn softmax_distribution(estimates: &[f64], zeta: f64) -> Result<PolicyDistribution> {
    check_estimates(estimates)?;
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(invalid("softmax temperature must be positive"));
    }
    let top = estimates[argmax(estimates)];
    let weights: Vec<f64> = estimates.iter().map(|&v| ((v - top) / zeta).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(PolicyDistribution {
        probs: weights.into_iter().map(|w| w / total).collect(),
    })
}

/// Greedy with probability `1 - epsilon`, uniform otherwise.
pub fn epsilon_greedy_distribution(estimates: &[f64], epsilon: f64) -> Result<PolicyDistribution> {
    check_estimates(estimates)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon must lie in [0, 1]"));
    }
    let k = estimates.len();
    let explore = epsilon / k as f64;
    let mut probs = vec![explore; k];
    probs[argmax(estimates)] += 1.0 - epsilon;
    Ok(PolicyDistribution { probs })
}

/// Inverse-CDF draw over the arms in index order.
pub fn sample_action(dist: &PolicyDistribution, stream: &mut Stream) -> usize {
    let u: f64 = stream.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}
