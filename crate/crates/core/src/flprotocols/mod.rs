//! Pluggable FL routines: each consumes an [`FLProblem`] and returns a
//! trained model together with its communication accounting.

mod local;
mod ridge;

pub use local::{fedavg, fedprox, lsgd_pfl, scaffold};
pub use ridge::{direct_ridge, distributed_agd};

use serde::{Deserialize, Serialize};

use crate::base::{rng_stream, AgentId, Stream};
use crate::error::{invalid, Result};
use crate::flcore::{AggregatorSpec, FLProblem};
use crate::models::{init_model, Arch, Model, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FLKind {
    Fedavg,
    Scaffold,
    Fedprox,
    LsgdPfl,
    DirectRidge,
    DistributedAgd,
}

impl FLKind {
    pub fn name(&self) -> &'static str {
        match self {
            FLKind::Fedavg => "fedavg",
            FLKind::Scaffold => "scaffold",
            FLKind::Fedprox => "fedprox",
            FLKind::LsgdPfl => "lsgd_pfl",
            FLKind::DirectRidge => "direct_ridge",
            FLKind::DistributedAgd => "distributed_agd",
        }
    }

    pub fn is_personalized(&self) -> bool {
        matches!(self, FLKind::LsgdPfl)
    }
}

/// Settings of one FL routine invocation (one call per epoch boundary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FLRoutineConfig {
    pub kind: FLKind,
    /// Communication rounds per call (iterative kinds).
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    /// Local SGD steps between two aggregations.
    #[serde(default = "defaults::local_steps")]
    pub local_steps: usize,
    #[serde(default = "defaults::local_lr")]
    pub local_lr: f64,
    #[serde(default = "defaults::server_lr")]
    pub server_lr: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// FedProx proximal strength.
    #[serde(default = "defaults::prox_mu")]
    pub prox_mu: f64,
    /// Start each call from the previous epoch's model.
    #[serde(default = "defaults::warm_start")]
    pub warm_start: bool,
    #[serde(default)]
    pub aggregator: AggregatorSpec,
    /// Distributed AGD stops once the certified optimality gap drops below this.
    #[serde(default = "defaults::agd_target")]
    pub agd_target: f64,
    /// Hard cap on distributed AGD gradient rounds.
    #[serde(default = "defaults::agd_round_cap")]
    pub agd_round_cap: usize,
    /// Power-iteration steps used to estimate the smoothness constant.
    #[serde(default = "defaults::power_steps")]
    pub power_steps: usize,
}

mod defaults {
    pub fn rounds() -> usize {
        100
    }
    pub fn local_steps() -> usize {
        1
    }
    pub fn local_lr() -> f64 {
        0.1
    }
    pub fn server_lr() -> f64 {
        1.0
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn prox_mu() -> f64 {
        0.01
    }
    pub fn warm_start() -> bool {
        true
    }
    pub fn agd_target() -> f64 {
        1e-6
    }
    pub fn agd_round_cap() -> usize {
        10_000
    }
    pub fn power_steps() -> usize {
        30
    }
}

impl FLRoutineConfig {
    pub fn new(kind: FLKind) -> Self {
        Self {
            kind,
            rounds: defaults::rounds(),
            local_steps: defaults::local_steps(),
            local_lr: defaults::local_lr(),
            server_lr: defaults::server_lr(),
            batch_size: defaults::batch_size(),
            prox_mu: defaults::prox_mu(),
            warm_start: defaults::warm_start(),
            aggregator: AggregatorSpec::default(),
            agd_target: defaults::agd_target(),
            agd_round_cap: defaults::agd_round_cap(),
            power_steps: defaults::power_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 || self.local_steps < 1 {
            return Err(invalid("rounds and local steps must be at least 1"));
        }
        if !(self.local_lr > 0.0 && self.local_lr.is_finite()) || !(self.server_lr > 0.0 && self.server_lr.is_finite()) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.batch_size < 1 {
            return Err(invalid("batch size must be positive"));
        }
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            return Err(invalid("proximal strength must be nonnegative"));
        }
        if self.agd_target.is_nan() || self.agd_target <= 0.0 || self.agd_round_cap < 1 {
            return Err(invalid("AGD target and round cap must be positive"));
        }
        self.aggregator.validate()
    }
}

/// Logical communication counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    pub rounds: u64,
    pub scalars_up: u64,
    pub scalars_down: u64,
}

impl std::ops::AddAssign for CommStats {
    fn add_assign(&mut self, other: Self) {
        self.rounds += other.rounds;
        self.scalars_up += other.scalars_up;
        self.scalars_down += other.scalars_down;
    }
}

/// Parameters split into a block shared by all agents and one private block
/// per agent; agent `m` uses `[shared, private[m]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedModel {
    pub shared: Vec<f64>,
    pub private: Vec<Vec<f64>>,
}

impl PersonalizedModel {
    /// Every agent starts from the same full parameter vector.
    pub fn replicate(params: &[f64], shared_dim: usize, agents: usize) -> Self {
        Self {
            shared: params[..shared_dim].to_vec(),
            private: vec![params[shared_dim..].to_vec(); agents],
        }
    }

    pub fn agent_params(&self, m: usize) -> Vec<f64> {
        let mut p = self.shared.clone();
        p.extend_from_slice(&self.private[m]);
        p
    }

    pub fn agent_model(&self, arch: Arch, m: usize) -> Result<Model> {
        let private = self
            .private
            .get(m)
            .ok_or_else(|| invalid(format!("no private block for agent position {m}")))?;
        let mut p = self.shared.clone();
        p.extend_from_slice(private);
        Model::unflatten(arch, p.into())
    }
}

/// Output of a routine: one global model or per-agent personalized models.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Shared(Model),
    Personalized(PersonalizedModel),
}

impl TrainedModel {
    /// Model used by the agent at `position` in the problem's dataset order.
    pub fn for_agent(&self, arch: Arch, position: usize) -> Result<Model> {
        match self {
            TrainedModel::Shared(m) => Ok(m.clone()),
            TrainedModel::Personalized(p) => p.agent_model(arch, position),
        }
    }
}

/// Hook applied to each agent's outgoing update before aggregation.
pub trait UpdateHook {
    fn transform(&self, agent: AgentId, round: usize, delta: &mut [f64]);
}

/// Where a routine draws its randomness from and what it should report.
pub struct FlContext<'a> {
    pub seed: u64,
    /// Stream label prefix, e.g. `"fl/epoch/3"`.
    pub label: String,
    pub hook: Option<&'a dyn UpdateHook>,
    /// Record the shared parameters after every round.
    pub trace: bool,
}

impl<'a> FlContext<'a> {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
            hook: None,
            trace: false,
        }
    }

    pub fn with_hook(mut self, hook: &'a dyn UpdateHook) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn traced(mut self) -> Self {
        self.trace = true;
        self
    }

    pub(crate) fn agent_stream(&self, agent: AgentId) -> Stream {
        rng_stream(self.seed, &format!("{}/agent/{}", self.label, agent))
    }

    pub(crate) fn server_stream(&self) -> Stream {
        rng_stream(self.seed, &format!("{}/server", self.label))
    }

    pub(crate) fn apply_hook(&self, agent: AgentId, round: usize, delta: &mut [f64]) {
        if let Some(h) = self.hook {
            h.transform(agent, round, delta);
        }
    }
}

/// Result of one routine call.
#[derive(Debug, Clone)]
pub struct FlOutcome {
    pub model: TrainedModel,
    pub stats: CommStats,
    /// Shared parameters after each round, when tracing was requested.
    pub trace: Vec<ParamVector>,
}

/// Dispatch to the configured routine.
///
/// With `warm_start` the previous epoch's model (if any) is the starting
/// point, otherwise the architecture's [`init_model`] under `init_seed`.
pub fn run_flroutine(
    cfg: &FLRoutineConfig,
    problem: &FLProblem,
    warm: Option<&TrainedModel>,
    init_seed: u64,
    ctx: &FlContext<'_>,
) -> Result<FlOutcome> {
    cfg.validate()?;
    let arch = *problem.arch();
    if matches!(cfg.kind, FLKind::DirectRidge | FLKind::DistributedAgd) && !arch.is_linear() {
        return Err(invalid(format!("{} requires a linear model", cfg.kind.name())));
    }
    let warm = if cfg.warm_start { warm } else { None };
    let fresh = || init_model(arch, init_seed);
    match cfg.kind {
        FLKind::LsgdPfl => {
            let shared_dim = problem
                .shared_dim()
                .ok_or_else(|| invalid("lsgd_pfl needs a problem with a shared/private parameter split"))?;
            let init = match warm {
                Some(TrainedModel::Personalized(p)) => p.clone(),
                Some(TrainedModel::Shared(m)) => PersonalizedModel::replicate(m.params(), shared_dim, problem.agents()),
                None => PersonalizedModel::replicate(fresh().params(), shared_dim, problem.agents()),
            };
            local::personalized_outcome(problem, cfg, &init, ctx)
        }
        kind => {
            let init = match warm {
                Some(TrainedModel::Shared(m)) => m.clone(),
                Some(TrainedModel::Personalized(_)) => {
                    return Err(invalid("cannot warm-start a shared routine from personalized models"))
                }
                None => fresh(),
            };
            match kind {
                FLKind::Fedavg | FLKind::Fedprox | FLKind::Scaffold => local::shared_outcome(problem, cfg, &init, ctx),
                FLKind::DirectRidge => {
                    let (model, stats) = ridge::direct_ridge_with(problem, ctx)?;
                    Ok(FlOutcome {
                        model: TrainedModel::Shared(model),
                        stats,
                        trace: Vec::new(),
                    })
                }
                FLKind::DistributedAgd => ridge::agd_outcome(problem, cfg, &init, ctx),
                FLKind::LsgdPfl => unreachable!(),
            }
        }
    }
}
