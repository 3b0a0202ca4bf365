#![allow(dead_code)]

use fedigw::base::{rng_stream, AgentId, EpochDataset, Sample};
use fedigw::flcore::FLProblem;
use fedigw::models::{Arch, FeatureMap, LossSpec, Model};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn provided(d: usize) -> FeatureMap {
    FeatureMap::Provided { feature_dim: d, arms: 1 }
}

/// Random context inside the unit ball.
pub fn unit_ball_vector(s: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| s.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r: f64 = s.gen_range(0.2..1.0);
    v.into_iter().map(|x| x * r / n).collect()
}

/// `agents` datasets of sizes summing to `n` with features in the unit ball.
/// `shift` moves each agent's context mean to create heterogeneity.
pub fn random_datasets(seed: u64, agents: usize, n: usize, d: usize, shift: f64) -> Vec<EpochDataset> {
    let mut s = rng_stream(seed, "test/problem");
    let truth: Vec<f64> = unit_ball_vector(&mut s, d);
    let mut sizes = vec![n / agents; agents];
    for size in sizes.iter_mut().take(n % agents) {
        *size += 1;
    }
    sizes
        .into_iter()
        .enumerate()
        .map(|(m, size)| {
            let center: Vec<f64> = (0..d).map(|_| shift * s.gen_range(-1.0..1.0)).collect();
            let samples = (0..size)
                .map(|_| {
                    let mut x = unit_ball_vector(&mut s, d);
                    for (xi, ci) in x.iter_mut().zip(&center) {
                        *xi = 0.5 * (*xi + ci);
                    }
                    let mean: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
                    let reward = (0.5 + 0.4 * mean + 0.05 * s.gen_range(-1.0..1.0)).clamp(0.0, 1.0);
                    Sample { context: x, action: 0, reward }
                })
                .collect();
            EpochDataset { agent: AgentId(m), epoch: 1, samples }
        })
        .collect()
}

pub fn ridge_problem(seed: u64, agents: usize, n: usize, d: usize, lambda: f64, shift: f64) -> FLProblem {
    FLProblem::new(
        random_datasets(seed, agents, n, d, shift),
        LossSpec::ridge(lambda),
        Arch::Linear { feature_map: provided(d) },
    )
    .unwrap()
}

/// Centralized dense solve on concatenated data: (X^T X / n + lambda I) w = X^T r / n.
pub fn dense_ridge_oracle(problem: &FLProblem) -> Vec<f64> {
    let map = match problem.arch() {
        Arch::Linear { feature_map } => *feature_map,
        _ => panic!("linear only"),
    };
    let d = map.dim();
    let rows: Vec<Vec<f64>> = problem
        .datasets()
        .iter()
        .flat_map(|ds| ds.samples.iter().map(|s| map.feature(&s.context, s.action).unwrap()))
        .collect();
    let rewards: Vec<f64> = problem.datasets().iter().flat_map(|ds| ds.samples.iter().map(|s| s.reward)).collect();
    let n = rows.len() as f64;
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let r = DVector::from_vec(rewards);
    let lambda = problem.loss().ridge_strength();
    let a = x.transpose() * &x / n + DMatrix::identity(d, d) * lambda;
    let b = x.transpose() * r / n;
    a.lu().solve(&b).expect("oracle solve").iter().copied().collect()
}

/// Exact `(L, mu)` of the global ridge objective from a dense eigen-decomposition.
pub fn exact_constants(problem: &FLProblem) -> (f64, f64) {
    let map = match problem.arch() {
        Arch::Linear { feature_map } => *feature_map,
        _ => panic!("linear only"),
    };
    let d = map.dim();
    let n = problem.total_samples() as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for ds in problem.datasets() {
        for s in &ds.samples {
            let phi = DVector::from_vec(map.feature(&s.context, s.action).unwrap());
            cov += &phi * phi.transpose() / n;
        }
    }
    let eig = cov.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let lambda = problem.loss().ridge_strength();
    (2.0 * (lambda + max), 2.0 * (lambda + min))
}

pub fn optimum_loss(problem: &FLProblem) -> f64 {
    let w = dense_ridge_oracle(problem);
    let model = Model::linear(match problem.arch() {
        Arch::Linear { feature_map } => *feature_map,
        _ => unreachable!(),
    }, w)
    .unwrap();
    problem.global_loss(&model).unwrap()
}
