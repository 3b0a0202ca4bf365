//! The FedIGW loop: agents interact in epochs, and at every epoch boundary
//! the epoch's data trains the reward model used in the next epoch.

mod byzantine;
mod metrics;

pub use byzantine::{Attack, AttackHook, ByzantineSpec};
pub use metrics::{compute_regret, moving_average, EpochRow, RunMetrics, StepRow};

use serde::{Deserialize, Serialize};

use crate::base::{rng_stream, AgentId, ClockMap, EpochDataset, EpochSchedule, GammaMode, GammaSchedule, Sample};
use crate::envs::{EnvSpec, Environment};
use crate::error::{invalid, Result};
use crate::flcore::FLProblem;
use crate::flprotocols::{run_flroutine, FLRoutineConfig, FlContext, TrainedModel};
use crate::models::{Arch, LossSpec, MlpArch, Model};
use crate::policies::{sample_action, PolicyConfig, PolicyDistribution};

/// Reward-model family used by the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ModelSpec {
    /// Linear in the environment's feature map.
    #[default]
    Linear,
    /// Two-layer ReLU network with one output per arm.
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_hidden() -> usize {
    256
}

fn default_fl() -> FLRoutineConfig {
    FLRoutineConfig::new(crate::flprotocols::FLKind::Fedavg)
}

fn default_horizon() -> u64 {
    4096
}

fn default_window() -> usize {
    500
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub policy: PolicyConfig,
    #[serde(default = "default_fl")]
    pub fl: FLRoutineConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub epochs: EpochSchedule,
    #[serde(default)]
    pub gamma: GammaSchedule,
    /// Local steps per global step for each agent; `None` means one each.
    #[serde(default)]
    pub clock_rates: Option<Vec<u64>>,
    /// Global horizon `T`.
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    /// Ridge strength; `None` uses `1 / n` for each FL call's `n` samples,
    /// `0` trains on the plain quadratic loss.
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    /// Moving-average window for rewards.
    #[serde(default = "default_window")]
    pub avg_window: usize,
    #[serde(default)]
    pub byzantine: Option<ByzantineSpec>,
}

impl RunConfig {
    pub fn new(env: EnvSpec, policy: PolicyConfig, fl: FLRoutineConfig, horizon: u64, seed: u64) -> Self {
        Self {
            env,
            policy,
            fl,
            model: ModelSpec::default(),
            epochs: EpochSchedule::default(),
            gamma: GammaSchedule::default(),
            clock_rates: None,
            horizon,
            seed,
            ridge_lambda: None,
            avg_window: default_window(),
            byzantine: None,
        }
    }

    pub fn clocks(&self) -> Result<ClockMap> {
        match &self.clock_rates {
            Some(r) => {
                if r.len() != self.env.agents {
                    return Err(invalid(format!(
                        "{} clock rates for {} agents",
                        r.len(),
                        self.env.agents
                    )));
                }
                ClockMap::new(r.clone())
            }
            None => ClockMap::synchronous(self.env.agents),
        }
    }

    /// Checks that do not need the environment to be built.
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.fl.validate()?;
        self.epochs.validate()?;
        self.gamma.validate()?;
        self.clocks()?;
        if self.horizon < self.epochs.epoch_end(1)? {
            return Err(invalid("horizon must cover at least the first epoch"));
        }
        if let Some(l) = self.ridge_lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(invalid("ridge_lambda must be finite and nonnegative"));
            }
        }
        if self.avg_window == 0 {
            return Err(invalid("avg_window must be positive"));
        }
        if let ModelSpec::Mlp { hidden } = self.model {
            if hidden == 0 {
                return Err(invalid("MLP needs at least one hidden unit"));
            }
        }
        if let Some(b) = &self.byzantine {
            b.validate(self.env.agents)?;
        }
        Ok(())
    }

    fn arch(&self, env: &Environment) -> Arch {
        match self.model {
            ModelSpec::Linear => Arch::Linear {
                feature_map: env.feature_map(),
            },
            ModelSpec::Mlp { hidden } => Arch::Mlp(MlpArch {
                input_dim: env.context_len(),
                hidden,
                arms: env.arms(),
            }),
        }
    }

    fn loss(&self, n: usize) -> LossSpec {
        match self.ridge_lambda {
            Some(0.0) => LossSpec::quadratic(),
            Some(l) => LossSpec::ridge(l),
            None => LossSpec::ridge(1.0 / n.max(1) as f64),
        }
    }
}

/// Receives the raw run events; used to audit the loop.
pub trait RunObserver {
    fn sample(&mut self, _epoch: usize, _agent: AgentId, _sample: &Sample) {}
    fn fl_problem(&mut self, _epoch: usize, _problem: &FLProblem) {}
}

struct NoObserver;
impl RunObserver for NoObserver {}

/// Run the FedIGW loop for `config.horizon` global steps.
pub fn run(config: &RunConfig) -> Result<RunMetrics> {
    run_observed(config, &mut NoObserver)
}

/// [`run`] for a personalized routine; errors unless the environment
/// exposes a shared/private split.
pub fn run_personalized(config: &RunConfig) -> Result<RunMetrics> {
    if !config.fl.kind.is_personalized() {
        return Err(invalid(format!("{} is not a personalized routine", config.fl.kind.name())));
    }
    run(config)
}

/// [`run`] with corrupt agents.
pub fn run_with_byzantine(config: &RunConfig, byzantine: ByzantineSpec) -> Result<RunMetrics> {
    let mut cfg = config.clone();
    cfg.byzantine = Some(byzantine);
    run(&cfg)
}

fn weighted_objective(problem: &FLProblem, model: &TrainedModel) -> Result<f64> {
    match model {
        TrainedModel::Shared(m) => problem.global_loss(m),
        TrainedModel::Personalized(p) => {
            let mut total = 0.0;
            for (pos, data) in problem.datasets().iter().enumerate() {
                let m = p.agent_model(*problem.arch(), pos)?;
                total += problem.weight(pos) * m.batch_loss(problem.loss(), &data.samples)?;
            }
            Ok(total)
        }
    }
}

/// A diverged model (e.g. after an unmitigated attack) carries no information.
fn finite_estimates(mut estimates: Vec<f64>, diverged: &mut bool) -> Vec<f64> {
    for v in &mut estimates {
        if !v.is_finite() {
            *v = 0.0;
            *diverged = true;
        }
    }
    estimates
}

pub fn run_observed(config: &RunConfig, observer: &mut dyn RunObserver) -> Result<RunMetrics> {
    config.validate()?;
    let env = Environment::build(&config.env, config.seed)?;
    run_in(config, &env, observer)
}

/// Run against an already built environment (e.g. with custom parameters).
pub fn run_in(config: &RunConfig, env: &Environment, observer: &mut dyn RunObserver) -> Result<RunMetrics> {
    config.validate()?;
    if env.agents() != config.env.agents {
        return Err(invalid("environment and config disagree on the number of agents"));
    }
    let agents = env.agents();
    let arms = env.arms();
    let clocks = config.clocks()?;
    let arch = config.arch(env);
    let split = env.shared_dim();
    if config.fl.kind.is_personalized() && split.is_none() {
        return Err(invalid(format!(
            "{} needs an environment with a shared/private parameter split",
            config.fl.kind.name()
        )));
    }
    if config.fl.kind.is_personalized() && !arch.is_linear() {
        return Err(invalid("the personalized split is defined for linear models"));
    }

    let mut env_streams: Vec<_> = (0..agents).map(|m| rng_stream(config.seed, &format!("env/agent/{m}"))).collect();
    let mut policy_streams: Vec<_> = (0..agents)
        .map(|m| rng_stream(config.seed, &format!("policy/agent/{m}")))
        .collect();
    let mut local_time = vec![0u64; agents];
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut trained: Option<TrainedModel> = None;
    let mut models: Vec<Option<Model>> = vec![None; agents];
    let mut cum_regret = 0.0;
    let mut gamma = match config.gamma.mode {
        GammaMode::Constant { value } => value,
        // the first epoch has no estimate, so every rule is uniform
        GammaMode::Theoretical { .. } => 0.0,
    };

    let mut diverged = false;
    let mut start = 0u64;
    let mut l = 1usize;
    while start < config.horizon {
        let boundary = config.epochs.epoch_end(l)?;
        let end = boundary.min(config.horizon);
        let mut datasets: Vec<EpochDataset> = (0..agents).map(|m| EpochDataset::new(AgentId(m), l)).collect();
        for t in start + 1..=end {
            for m in 0..agents {
                let agent = AgentId(m);
                for _ in 0..clocks.rate(agent)? {
                    local_time[m] += 1;
                    let mut step = env.step(agent, &mut env_streams[m])?;
                    let dist = match config.policy {
                        PolicyConfig::Oracle => PolicyDistribution::point_mass(arms, step.oracle().best_action),
                        policy => {
                            let estimates = match &models[m] {
                                Some(model) => finite_estimates(model.predict_all(step.context())?, &mut diverged),
                                None => vec![0.0; arms],
                            };
                            policy.distribution(&estimates, gamma)?
                        }
                    };
                    let action = sample_action(&dist, &mut policy_streams[m]);
                    let reward = step.reveal(action)?;
                    let regret = step.oracle().regret(action);
                    cum_regret += regret;
                    steps.push(StepRow {
                        t,
                        agent: m,
                        t_local: local_time[m],
                        epoch: l,
                        action,
                        reward,
                        regret,
                    });
                    let sample = Sample {
                        context: step.into_context(),
                        action,
                        reward,
                    };
                    observer.sample(l, agent, &sample);
                    datasets[m].samples.push(sample);
                }
            }
        }
        if std::mem::take(&mut diverged) {
            log::warn!("epoch {l}: model produced non-finite estimates; treated as zero");
        }
        let counts: Vec<u64> = datasets.iter().map(|d| d.len() as u64).collect();
        let avg_reward = steps
            .iter()
            .rev()
            .take(config.avg_window)
            .map(|s| s.reward)
            .sum::<f64>()
            / steps.len().min(config.avg_window) as f64;
        let mut row = EpochRow {
            epoch: l,
            gamma,
            samples: counts.clone(),
            fl_loss: None,
            comm: Default::default(),
            cum_regret,
            avg_reward,
        };
        // train only when the model will be used
        if end < config.horizon {
            let n: usize = datasets.iter().map(|d| d.len()).sum();
            let mut problem = FLProblem::new(datasets, config.loss(n), arch)?;
            if config.fl.kind.is_personalized() {
                problem = problem.with_split(split.expect("checked above"))?;
            }
            observer.fl_problem(l, &problem);
            let label = format!("fl/epoch/{l}");
            let hook = config.byzantine.as_ref().map(|spec| AttackHook {
                spec,
                seed: config.seed,
                label: label.clone(),
            });
            let mut ctx = FlContext::new(config.seed, label);
            if let Some(h) = &hook {
                ctx = ctx.with_hook(h);
            }
            let outcome = run_flroutine(&config.fl, &problem, trained.as_ref(), config.seed, &ctx)?;
            row.fl_loss = Some(weighted_objective(&problem, &outcome.model)?);
            row.comm = outcome.stats;
            for (m, slot) in models.iter_mut().enumerate() {
                *slot = Some(outcome.model.for_agent(arch, m)?);
            }
            trained = Some(outcome.model);
            let excess = config.gamma.default_excess_risk(&counts).unwrap_or(0.0);
            gamma = config.gamma.gamma_for_epoch(l + 1, &counts, &vec![arms; agents], excess)?;
        }
        epochs.push(row);
        start = end;
        l += 1;
    }
    Ok(RunMetrics {
        steps,
        epochs,
        window: config.avg_window,
        corrupt: config.byzantine.as_ref().map(|b| b.corrupt_agents.clone()).unwrap_or_default(),
    })
}
