//! Routines specific to linear models with ridge loss.

use super::{CommStats, FLRoutineConfig, FlContext, FlOutcome, TrainedModel};
use crate::error::{invalid, Result};
use crate::flcore::{aggregate, FLProblem, Update};
use crate::linalg;
use crate::models::{Arch, FeatureMap, Model};

fn feature_map(problem: &FLProblem) -> Result<FeatureMap> {
    match problem.arch() {
        Arch::Linear { feature_map } => Ok(*feature_map),
        Arch::Mlp(_) => Err(invalid("ridge routines require a linear model")),
    }
}

/// Local statistics `(V_m, b_m)`: `V_m = sum phi phi^T` (row-major) and
/// `b_m = sum r phi`.
fn local_statistics(map: &FeatureMap, samples: &[crate::base::Sample]) -> (Vec<f64>, Vec<f64>) {
    let d = map.dim();
    let mut cov = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for s in samples {
        let (offset, part) = map.block(&s.context, s.action);
        for (i, &pi) in part.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            rhs[offset + i] += s.reward * pi;
            let row = &mut cov[(offset + i) * d + offset..(offset + i) * d + offset + part.len()];
            linalg::axpy(pi, part, row);
        }
    }
    (cov, rhs)
}

pub(super) fn direct_ridge_with(problem: &FLProblem, ctx: &FlContext<'_>) -> Result<(Model, CommStats)> {
    let map = feature_map(problem)?;
    let d = map.dim();
    let n = problem.total_samples() as f64;
    let lambda = problem.loss().ridge_strength();
    let mut cov = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for data in problem.datasets() {
        let (v, b) = local_statistics(&map, &data.samples);
        let mut payload = v;
        payload.extend_from_slice(&b);
        ctx.apply_hook(data.agent, 0, &mut payload);
        linalg::axpy(1.0, &payload[..d * d], &mut cov);
        linalg::axpy(1.0, &payload[d * d..], &mut rhs);
    }
    linalg::scale(1.0 / n, &mut cov);
    linalg::scale(1.0 / n, &mut rhs);
    for i in 0..d {
        cov[i * d + i] += lambda;
    }
    let weights = linalg::cholesky_solve(&cov, &rhs)?;
    let per_agent = (d * d + d) as u64;
    let agents = problem.agents() as u64;
    let stats = CommStats {
        rounds: 1,
        scalars_up: agents * per_agent,
        scalars_down: agents * per_agent,
    };
    Ok((Model::linear(map, weights)?, stats))
}

/// One-shot aggregation of local covariance matrices and reward aggregates,
/// followed by the closed-form solve
/// `((1/n) sum V_m + lambda I) w = (1/n) sum b_m`.
pub fn direct_ridge(problem: &FLProblem, ctx: &FlContext<'_>) -> Result<(Model, CommStats)> {
    direct_ridge_with(problem, ctx)
}

/// Smoothness and strong-convexity constants `(L, mu)` used by distributed AGD.
///
/// `L = 2 (lambda + 1.05 * lambda_max)`, with `lambda_max` of `(1/n) sum V_m`
/// estimated by power iteration on distributed matrix-vector products. The
/// 5% margin covers the Rayleigh quotient's underestimate.
fn agd_constants(problem: &FLProblem, map: &FeatureMap, power_steps: usize) -> (f64, f64) {
    let n = problem.total_samples() as f64;
    let lambda = problem.loss().ridge_strength();
    let top = linalg::power_iteration(map.dim(), power_steps, |v| {
        let mut out = vec![0.0; v.len()];
        for data in problem.datasets() {
            for s in &data.samples {
                let proj = map.inner(v, &s.context, s.action);
                map.accumulate(&mut out, &s.context, s.action, proj / n);
            }
        }
        out
    });
    (2.0 * (lambda + 1.05 * top), 2.0 * lambda)
}

pub(super) fn agd_outcome(problem: &FLProblem, cfg: &FLRoutineConfig, init: &Model, ctx: &FlContext<'_>) -> Result<FlOutcome> {
    let map = feature_map(problem)?;
    let lambda = problem.loss().ridge_strength();
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(invalid("distributed AGD needs a positive ridge strength"));
    }
    if init.arch() != problem.arch() {
        return Err(invalid("initial model does not match the problem architecture"));
    }
    let d = map.dim() as u64;
    let agents = problem.agents() as u64;
    let (smooth, strong) = agd_constants(problem, &map, cfg.power_steps);
    let mut stats = CommStats {
        rounds: cfg.power_steps as u64 + 1,
        scalars_up: (cfg.power_steps as u64 + 1) * agents * d,
        scalars_down: (cfg.power_steps as u64 + 1) * agents * d,
    };
    let momentum = (smooth.sqrt() - strong.sqrt()) / (smooth.sqrt() + strong.sqrt());
    let loss = *problem.loss();
    let mut server = ctx.server_stream();
    let mut x = init.params().to_vec();
    let mut y = Model::unflatten(*problem.arch(), x.clone().into())?;
    let mut trace = Vec::new();
    for round in 0..cfg.agd_round_cap {
        let mut updates = Vec::with_capacity(problem.agents());
        for data in problem.datasets() {
            let mut g = y.batch_gradient(&loss, &data.samples)?.into_inner();
            ctx.apply_hook(data.agent, round, &mut g);
            updates.push(Update {
                agent: data.agent,
                delta: g.into(),
                sample_count: data.len(),
            });
        }
        let grad = aggregate(&cfg.aggregator, &updates, &mut server)?;
        stats += CommStats {
            rounds: 1,
            scalars_up: agents * d,
            scalars_down: agents * d,
        };
        // strong convexity: L(y) - L* <= ||grad L(y)||^2 / (2 mu)
        if linalg::norm_sq(&grad) / (2.0 * strong) <= cfg.agd_target {
            break;
        }
        let mut next = y.params().to_vec();
        linalg::axpy(-1.0 / smooth, &grad, &mut next);
        let ahead: Vec<f64> = next.iter().zip(&x).map(|(n, p)| n + momentum * (n - p)).collect();
        x = next;
        y.params_mut().copy_from_slice(&ahead);
        if ctx.trace {
            trace.push(y.flatten());
        }
    }
    Ok(FlOutcome {
        model: TrainedModel::Shared(y),
        stats,
        trace,
    })
}

/// Nesterov-accelerated full-batch gradient descent where every iteration
/// aggregates the agents' local gradients once. Stops when the certified
/// optimality gap `||grad||^2 / (2 mu)` is at most `cfg.agd_target`, or at
/// `cfg.agd_round_cap` gradient rounds. Reported rounds include the
/// power-iteration rounds used to estimate the smoothness constant.
pub fn distributed_agd(problem: &FLProblem, cfg: &FLRoutineConfig, init: &Model, ctx: &FlContext<'_>) -> Result<(Model, CommStats)> {
    let out = agd_outcome(problem, cfg, init, ctx)?;
    match out.model {
        TrainedModel::Shared(m) => Ok((m, out.stats)),
        TrainedModel::Personalized(_) => unreachable!(),
    }
}
