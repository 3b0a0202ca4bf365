//! FedAvg-style routines: every round each agent runs local SGD from the
//! current global parameters and the server applies the aggregated change.
//!
//! FedProx adds a proximal pull towards the round-start model, SCAFFOLD
//! corrects local gradients with control variates, and LSGD-PFL aggregates
//! only a shared prefix of the parameters while each agent keeps the rest.

use super::{CommStats, FLKind, FLRoutineConfig, FlContext, FlOutcome, PersonalizedModel, TrainedModel};
use crate::error::{invalid, Result};
use crate::flcore::{aggregate, BatchSampler, FLProblem, Update};
use crate::linalg;
use crate::models::{Model, ParamVector};

#[derive(Debug, Clone, Copy)]
enum Variant {
    Plain,
    Prox(f64),
    Scaffold,
}

struct Trained {
    shared: Vec<f64>,
    private: Vec<Vec<f64>>,
    stats: CommStats,
    trace: Vec<ParamVector>,
}

fn train(
    problem: &FLProblem,
    cfg: &FLRoutineConfig,
    variant: Variant,
    mut shared: Vec<f64>,
    mut private: Vec<Vec<f64>>,
    ctx: &FlContext<'_>,
) -> Result<Trained> {
    cfg.validate()?;
    let arch = *problem.arch();
    let dim = arch.param_count();
    let shared_dim = shared.len();
    let agents = problem.agents();
    if private.len() != agents || private.iter().any(|p| shared_dim + p.len() != dim) {
        return Err(invalid(format!(
            "parameter split does not match: {agents} agents, {dim} parameters, shared block {shared_dim}"
        )));
    }
    let loss = *problem.loss();
    let mut samplers: Vec<BatchSampler> = problem
        .datasets()
        .iter()
        .map(|d| BatchSampler::new(cfg.batch_size, ctx.agent_stream(d.agent)))
        .collect();
    let mut server = ctx.server_stream();
    let scaffold = matches!(variant, Variant::Scaffold);
    let mut control = vec![0.0; if scaffold { dim } else { 0 }];
    let mut client_controls = vec![control.clone(); if scaffold { agents } else { 0 }];
    let payload = if scaffold { 2 * shared_dim } else { shared_dim } as u64;
    let mut stats = CommStats::default();
    let mut trace = Vec::new();
    let weights = problem.weights();

    for round in 0..cfg.rounds {
        let mut updates = Vec::with_capacity(agents);
        let mut control_change = vec![0.0; control.len()];
        for (pos, data) in problem.datasets().iter().enumerate() {
            let mut start = shared.clone();
            start.extend_from_slice(&private[pos]);
            let mut local = Model::unflatten(arch, start.clone().into())?;
            for _ in 0..cfg.local_steps {
                let mut grad = samplers[pos].next_gradient(&local, &loss, &data.samples)?;
                match variant {
                    Variant::Plain => {}
                    Variant::Prox(mu) => {
                        if mu != 0.0 {
                            for ((g, w), w0) in grad.iter_mut().zip(local.params()).zip(&start) {
                                *g += mu * (w - w0);
                            }
                        }
                    }
                    Variant::Scaffold => {
                        for ((g, ci), c) in grad.iter_mut().zip(&client_controls[pos]).zip(&control) {
                            *g = *g - ci + c;
                        }
                    }
                }
                linalg::axpy(-cfg.local_lr, &grad, local.params_mut());
            }
            let params = local.params();
            let mut delta = linalg::sub(&params[..shared_dim], &shared);
            private[pos] = params[shared_dim..].to_vec();
            if scaffold {
                // option II: c_m <- c_m - c + (x - y) / (K * lr)
                let denom = cfg.local_steps as f64 * cfg.local_lr;
                for i in 0..dim {
                    let updated = client_controls[pos][i] - control[i] + (start[i] - params[i]) / denom;
                    control_change[i] += weights[pos] * (updated - client_controls[pos][i]);
                    client_controls[pos][i] = updated;
                }
            }
            ctx.apply_hook(data.agent, round, &mut delta);
            updates.push(Update {
                agent: data.agent,
                delta: delta.into(),
                sample_count: data.len(),
            });
        }
        let step = aggregate(&cfg.aggregator, &updates, &mut server)?;
        linalg::axpy(cfg.server_lr, &step, &mut shared);
        if scaffold {
            linalg::axpy(1.0, &control_change, &mut control);
        }
        stats += CommStats {
            rounds: 1,
            scalars_up: agents as u64 * payload,
            scalars_down: agents as u64 * payload,
        };
        if ctx.trace {
            trace.push(shared.clone().into());
        }
    }
    Ok(Trained {
        shared,
        private,
        stats,
        trace,
    })
}

fn shared_run(problem: &FLProblem, cfg: &FLRoutineConfig, variant: Variant, init: &Model, ctx: &FlContext<'_>) -> Result<FlOutcome> {
    if init.arch() != problem.arch() {
        return Err(invalid("initial model does not match the problem architecture"));
    }
    let t = train(problem, cfg, variant, init.params().to_vec(), vec![Vec::new(); problem.agents()], ctx)?;
    Ok(FlOutcome {
        model: TrainedModel::Shared(Model::unflatten(*problem.arch(), t.shared.into())?),
        stats: t.stats,
        trace: t.trace,
    })
}

pub(super) fn shared_outcome(problem: &FLProblem, cfg: &FLRoutineConfig, init: &Model, ctx: &FlContext<'_>) -> Result<FlOutcome> {
    let variant = match cfg.kind {
        FLKind::Fedavg => Variant::Plain,
        FLKind::Fedprox => Variant::Prox(cfg.prox_mu),
        FLKind::Scaffold => Variant::Scaffold,
        other => return Err(invalid(format!("{} is not a FedAvg-style routine", other.name()))),
    };
    shared_run(problem, cfg, variant, init, ctx)
}

pub(super) fn personalized_outcome(
    problem: &FLProblem,
    cfg: &FLRoutineConfig,
    init: &PersonalizedModel,
    ctx: &FlContext<'_>,
) -> Result<FlOutcome> {
    if let Some(split) = problem.shared_dim() {
        if split != init.shared.len() {
            return Err(invalid(format!(
                "shared block has {} parameters, problem declares {split}",
                init.shared.len()
            )));
        }
    }
    let t = train(problem, cfg, Variant::Plain, init.shared.clone(), init.private.clone(), ctx)?;
    Ok(FlOutcome {
        model: TrainedModel::Personalized(PersonalizedModel {
            shared: t.shared,
            private: t.private,
        }),
        stats: t.stats,
        trace: t.trace,
    })
}

fn into_shared(outcome: FlOutcome) -> (Model, CommStats) {
    match outcome.model {
        TrainedModel::Shared(m) => (m, outcome.stats),
        TrainedModel::Personalized(_) => unreachable!("shared routine returned personalized models"),
    }
}

/// FedAvg: `rounds` rounds of `local_steps` local SGD steps followed by
/// `w <- w + server_lr * aggregate(local - w)`.
pub fn fedavg(problem: &FLProblem, cfg: &FLRoutineConfig, init: &Model, ctx: &FlContext<'_>) -> Result<(Model, CommStats)> {
    shared_run(problem, cfg, Variant::Plain, init, ctx).map(into_shared)
}

/// FedProx: FedAvg whose local gradients gain `prox_mu * (w_local - w_round_start)`.
pub fn fedprox(problem: &FLProblem, cfg: &FLRoutineConfig, init: &Model, ctx: &FlContext<'_>) -> Result<(Model, CommStats)> {
    shared_run(problem, cfg, Variant::Prox(cfg.prox_mu), init, ctx).map(into_shared)
}

/// SCAFFOLD with option-II client control variates. Control variates travel
/// with the model, so each round moves twice the FedAvg payload.
pub fn scaffold(problem: &FLProblem, cfg: &FLRoutineConfig, init: &Model, ctx: &FlContext<'_>) -> Result<(Model, CommStats)> {
    shared_run(problem, cfg, Variant::Scaffold, init, ctx).map(into_shared)
}

/// LSGD-PFL: local steps move both blocks, only shared-block changes are
/// aggregated and private blocks never leave the agent.
pub fn lsgd_pfl(
    problem: &FLProblem,
    cfg: &FLRoutineConfig,
    init: &PersonalizedModel,
    ctx: &FlContext<'_>,
) -> Result<(PersonalizedModel, CommStats)> {
    let out = personalized_outcome(problem, cfg, init, ctx)?;
    match out.model {
        TrainedModel::Personalized(p) => Ok((p, out.stats)),
        TrainedModel::Shared(_) => unreachable!(),
    }
}
