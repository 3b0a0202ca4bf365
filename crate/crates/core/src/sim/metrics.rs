use serde::{Deserialize, Serialize};

use crate::flprotocols::CommStats;

/// One agent interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    /// Global time step (1-based).
    pub t: u64,
    pub agent: usize,
    /// Agent-local time step (1-based).
    pub t_local: u64,
    pub epoch: usize,
    pub action: usize,
    pub reward: f64,
    /// `mu(x, pi*(x)) - mu(x, a)`.
    pub regret: f64,
}

/// Summary of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub gamma: f64,
    /// Local samples collected by each agent in this epoch.
    pub samples: Vec<u64>,
    /// Weighted objective of the model trained at the end of the epoch;
    /// `None` when no training happened (the horizon ended first).
    pub fl_loss: Option<f64>,
    pub comm: CommStats,
    /// Cumulative regret after the epoch's last step.
    pub cum_regret: f64,
    /// Moving-average reward after the epoch's last step.
    pub avg_reward: f64,
}

/// Everything recorded during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: Vec<StepRow>,
    pub epochs: Vec<EpochRow>,
    /// Moving-average window in steps.
    pub window: usize,
    /// Agents whose FL updates were corrupted.
    pub corrupt: Vec<usize>,
}

/// Cumulative regret `Reg(t)` over a step log.
pub fn compute_regret(steps: &[StepRow]) -> Vec<f64> {
    let mut total = 0.0;
    steps
        .iter()
        .map(|s| {
            total += s.regret;
            total
        })
        .collect()
}

/// Trailing mean of rewards over at most `window` steps.
pub fn moving_average(rewards: impl IntoIterator<Item = f64>, window: usize) -> Vec<f64> {
    let window = window.max(1);
    let rewards: Vec<f64> = rewards.into_iter().collect();
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(rewards.len());
    for i in 0..rewards.len() {
        sum += rewards[i];
        if i >= window {
            sum -= rewards[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

impl RunMetrics {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        compute_regret(&self.steps)
    }

    pub fn total_regret(&self) -> f64 {
        self.steps.iter().map(|s| s.regret).sum()
    }

    /// Regret up to and including global step `t`.
    pub fn regret_until(&self, t: u64) -> f64 {
        self.steps.iter().take_while(|s| s.t <= t).map(|s| s.regret).sum()
    }

    pub fn agent_regret(&self, agent: usize) -> f64 {
        self.steps.iter().filter(|s| s.agent == agent).map(|s| s.regret).sum()
    }

    /// Regret of agents that were not corrupted.
    pub fn honest_regret(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| !self.corrupt.contains(&s.agent))
            .map(|s| s.regret)
            .sum()
    }

    pub fn corrupt_regret(&self) -> f64 {
        self.total_regret() - self.honest_regret()
    }

    pub fn moving_average_reward(&self) -> Vec<f64> {
        moving_average(self.steps.iter().map(|s| s.reward), self.window)
    }

    /// Moving-average reward at the end of the run.
    pub fn final_avg_reward(&self) -> f64 {
        let n = self.steps.len();
        let w = self.window.max(1).min(n.max(1));
        if n == 0 {
            return 0.0;
        }
        self.steps[n - w..].iter().map(|s| s.reward).sum::<f64>() / w as f64
    }

    /// Local steps taken by each agent.
    pub fn local_steps(&self, agents: usize) -> Vec<u64> {
        let mut out = vec![0; agents];
        for s in &self.steps {
            out[s.agent] += 1;
        }
        out
    }

    pub fn comm_total(&self) -> CommStats {
        let mut c = CommStats::default();
        for e in &self.epochs {
            c += e.comm;
        }
        c
    }
}
