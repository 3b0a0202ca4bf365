mod common;

use fedigw::base::{AgentId, EpochDataset, Sample};
use fedigw::flcore::{AggregatorKind, AggregatorSpec, FLProblem};
use fedigw::flprotocols::{
    direct_ridge, distributed_agd, fedavg, fedprox, lsgd_pfl, run_flroutine, scaffold, FLKind, FLRoutineConfig,
    FlContext, PersonalizedModel, TrainedModel,
};
use fedigw::linalg;
use fedigw::models::{init_model, Arch, LossSpec, MlpArch, Model};

fn full_batch(kind: FLKind, rounds: usize, local_steps: usize, lr: f64) -> FLRoutineConfig {
    FLRoutineConfig {
        rounds,
        local_steps,
        local_lr: lr,
        batch_size: usize::MAX,
        ..FLRoutineConfig::new(kind)
    }
}

fn zero_model(problem: &FLProblem) -> Model {
    Model::zeros(*problem.arch())
}

fn gap(problem: &FLProblem, model: &Model) -> f64 {
    problem.global_loss(model).unwrap() - common::optimum_loss(problem)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn direct_ridge_matches_dense_solve() {
    for seed in 0..50u64 {
        let d = 1 + (seed as usize % 16);
        let problem = common::ridge_problem(seed, 4, 40 + 3 * d, d, 1.0 / (40.0 + 3.0 * d as f64), 0.3);
        let (model, stats) = direct_ridge(&problem, &FlContext::new(seed, "fl")).unwrap();
        let oracle = common::dense_ridge_oracle(&problem);
        assert!(max_abs_diff(model.params(), &oracle) <= 1e-10, "seed {seed}");
        assert_eq!(stats.rounds, 1);
        assert_eq!(stats.scalars_up, 4 * (d * d + d) as u64);
    }
}

#[test]
fn direct_ridge_edge_cases() {
    let one = vec![EpochDataset {
        agent: AgentId(0),
        epoch: 1,
        samples: vec![Sample { context: vec![1.0], action: 0, reward: 1.0 }],
    }];
    let arch = Arch::Linear { feature_map: common::provided(1) };
    let problem = FLProblem::new(one.clone(), LossSpec::ridge(1e-12), arch).unwrap();
    let (model, _) = direct_ridge(&problem, &FlContext::new(0, "fl")).unwrap();
    assert!((model.params()[0] - 1.0).abs() < 1e-9);

    let singular = FLProblem::new(
        vec![EpochDataset {
            agent: AgentId(0),
            epoch: 1,
            samples: vec![Sample { context: vec![1.0, 0.0], action: 0, reward: 1.0 }],
        }],
        LossSpec::quadratic(),
        Arch::Linear { feature_map: common::provided(2) },
    )
    .unwrap();
    assert!(matches!(
        direct_ridge(&singular, &FlContext::new(0, "fl")),
        Err(fedigw::Error::NumericFailure(_))
    ));

    let problem = common::ridge_problem(9, 3, 50, 4, 1e6, 0.2);
    let (model, _) = direct_ridge(&problem, &FlContext::new(0, "fl")).unwrap();
    assert!(linalg::norm(model.params()) <= 1.0 / 1e6);
}

#[test]
fn single_agent_fedavg_is_gradient_descent() {
    let problem = common::ridge_problem(1, 1, 80, 6, 1.0 / 80.0, 0.0);
    let cfg = full_batch(FLKind::Fedavg, 30, 1, 0.3);
    let out = run_flroutine(&cfg, &problem, None, 0, &FlContext::new(1, "fl").traced()).unwrap();
    let mut w = zero_model(&problem);
    for (round, params) in out.trace.iter().enumerate() {
        let g = w.batch_gradient(problem.loss(), &problem.datasets()[0].samples).unwrap();
        linalg::axpy(-0.3, &g, w.params_mut());
        assert!(max_abs_diff(params, w.params()) <= 1e-12, "round {round}");
    }
    assert_eq!(out.trace.len(), 30);
}

#[test]
fn fedavg_reaches_ridge_optimum() {
    let problem = common::ridge_problem(2, 4, 200, 10, 1.0 / 200.0, 0.0);
    let cfg = full_batch(FLKind::Fedavg, 400, 5, 0.3);
    let (model, stats) = fedavg(&problem, &cfg, &zero_model(&problem), &FlContext::new(2, "fl")).unwrap();
    let g = gap(&problem, &model);
    assert!(g <= 1e-6, "gap {g}");
    assert_eq!(stats.rounds, 400);
    assert_eq!(stats.scalars_up, 400 * 4 * 10);
}

#[test]
fn duplicated_agents_follow_single_agent_trajectory() {
    let single = common::ridge_problem(3, 1, 50, 5, 0.02, 0.0);
    let mut twin = single.datasets()[0].clone();
    twin.agent = AgentId(1);
    let double = FLProblem::new(vec![single.datasets()[0].clone(), twin], *single.loss(), *single.arch()).unwrap();
    let cfg = full_batch(FLKind::Fedavg, 20, 3, 0.4);
    let a = run_flroutine(&cfg, &single, None, 0, &FlContext::new(3, "fl").traced()).unwrap();
    let b = run_flroutine(&cfg, &double, None, 0, &FlContext::new(3, "fl").traced()).unwrap();
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!(max_abs_diff(x, y) <= 1e-12);
    }
}

#[test]
fn fedprox_without_proximal_term_is_fedavg() {
    let problem = common::ridge_problem(4, 3, 120, 6, 0.01, 0.4);
    let mut cfg = FLRoutineConfig { rounds: 25, local_steps: 4, batch_size: 16, ..FLRoutineConfig::new(FLKind::Fedavg) };
    let ctx = FlContext::new(4, "fl/epoch/2");
    let (avg, s1) = fedavg(&problem, &cfg, &zero_model(&problem), &ctx).unwrap();
    cfg.prox_mu = 0.0;
    let (prox, s2) = fedprox(&problem, &cfg, &zero_model(&problem), &ctx).unwrap();
    let bits = |m: &Model| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&avg), bits(&prox));
    assert_eq!(s1, s2);
}

#[test]
fn huge_proximal_strength_pins_local_iterates() {
    let problem = common::ridge_problem(5, 3, 90, 4, 0.01, 0.5);
    let init = Model::linear(common::provided(4), vec![0.3, -0.2, 0.1, 0.4]).unwrap();
    // lr * mu = 1 makes the proximal pull cancel local drift exactly.
    let cfg = FLRoutineConfig { rounds: 1, local_steps: 6, local_lr: 1e-9, prox_mu: 1e9, batch_size: usize::MAX, ..FLRoutineConfig::new(FLKind::Fedprox) };
    let (model, _) = fedprox(&problem, &cfg, &init, &FlContext::new(5, "fl")).unwrap();
    let grad_scale = linalg::norm(&problem.global_gradient(&init).unwrap());
    let moved = linalg::norm(&linalg::sub(model.params(), init.params()));
    // one plain step would move lr * grad; later steps are pulled back to the start
    assert!(moved / (1e-9 * grad_scale) <= 1.0 + 1e-6);
}

#[test]
fn fedprox_converges_with_moderate_proximal_term() {
    let problem = common::ridge_problem(6, 4, 200, 10, 1.0 / 200.0, 0.0);
    let cfg = FLRoutineConfig { prox_mu: 0.1, ..full_batch(FLKind::Fedprox, 600, 5, 0.5) };
    let (model, _) = fedprox(&problem, &cfg, &zero_model(&problem), &FlContext::new(6, "fl")).unwrap();
    let g = gap(&problem, &model);
    assert!(g <= 1e-5, "gap {g}");
}

#[test]
fn scaffold_homogeneous_reaches_optimum() {
    let base = common::ridge_problem(7, 1, 60, 10, 1.0 / 200.0, 0.0);
    let shared = base.datasets()[0].clone();
    let datasets = (0..4)
        .map(|m| EpochDataset { agent: AgentId(m), ..shared.clone() })
        .collect();
    let problem = FLProblem::new(datasets, LossSpec::ridge(1.0 / 240.0), *base.arch()).unwrap();
    let cfg = full_batch(FLKind::Scaffold, 400, 5, 0.5);
    let (model, stats) = scaffold(&problem, &cfg, &zero_model(&problem), &FlContext::new(7, "fl")).unwrap();
    assert!(gap(&problem, &model) <= 1e-6);
    assert_eq!(stats.scalars_up, 2 * 400 * 4 * 10);
}

#[test]
fn scaffold_first_round_matches_fedavg_with_one_local_step() {
    let problem = common::ridge_problem(8, 3, 60, 5, 0.01, 0.5);
    let cfg = full_batch(FLKind::Fedavg, 1, 1, 0.3);
    let (a, _) = fedavg(&problem, &cfg, &zero_model(&problem), &FlContext::new(8, "fl")).unwrap();
    let (b, _) = scaffold(&problem, &cfg, &zero_model(&problem), &FlContext::new(8, "fl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scaffold_beats_fedavg_under_heterogeneity() {
    let mut wins = 0;
    for seed in 0..10 {
        let problem = common::ridge_problem(100 + seed, 5, 150, 6, 0.01, 1.0);
        let cfg = full_batch(FLKind::Fedavg, 60, 20, 0.3);
        let ctx = FlContext::new(seed, "fl");
        let (avg, _) = fedavg(&problem, &cfg, &zero_model(&problem), &ctx).unwrap();
        let (sc, _) = scaffold(&problem, &cfg, &zero_model(&problem), &ctx).unwrap();
        if gap(&problem, &sc) <= gap(&problem, &avg) {
            wins += 1;
        }
    }
    assert!(wins >= 8, "scaffold won {wins}/10");
}

#[test]
fn lsgd_pfl_degenerate_splits() {
    let problem = common::ridge_problem(9, 3, 90, 5, 0.01, 0.4);
    let cfg = FLRoutineConfig { rounds: 20, local_steps: 3, batch_size: 8, ..FLRoutineConfig::new(FLKind::LsgdPfl) };
    let ctx = FlContext::new(9, "fl");
    let init = zero_model(&problem);

    let (avg, _) = fedavg(&problem, &cfg, &init, &ctx).unwrap();
    let shared_all = PersonalizedModel::replicate(init.params(), 5, 3);
    let (pers, stats) = lsgd_pfl(&problem.clone().with_split(5).unwrap(), &cfg, &shared_all, &ctx).unwrap();
    assert!(max_abs_diff(&pers.shared, avg.params()) <= 1e-12);
    assert_eq!(stats.scalars_up, 20 * 3 * 5);

    let private_all = PersonalizedModel::replicate(init.params(), 0, 3);
    let (pers, stats) = lsgd_pfl(&problem.clone().with_split(0).unwrap(), &cfg, &private_all, &ctx).unwrap();
    assert_eq!(stats.scalars_up, 0);
    assert!(pers.shared.is_empty());
    assert_ne!(pers.private[0], pers.private[1]);

    let bad = PersonalizedModel::replicate(init.params(), 2, 3);
    assert!(lsgd_pfl(&problem.clone().with_split(3).unwrap(), &cfg, &bad, &ctx).is_err());
}

#[test]
fn distributed_agd_matches_direct_ridge_within_round_budget() {
    for seed in 0..20u64 {
        let problem = common::ridge_problem(200 + seed, 4, 200, 10, 1.0 / 200.0, 0.3);
        let cfg = FLRoutineConfig::new(FLKind::DistributedAgd);
        let ctx = FlContext::new(seed, "fl");
        let (agd, stats) = distributed_agd(&problem, &cfg, &zero_model(&problem), &ctx).unwrap();
        let (direct, _) = direct_ridge(&problem, &ctx).unwrap();
        let diff = problem.global_loss(&agd).unwrap() - problem.global_loss(&direct).unwrap();
        assert!(diff <= 1e-6, "seed {seed}: {diff}");
        let (l, mu) = common::exact_constants(&problem);
        let bound = 10.0 * (l / mu).sqrt() * (1.0 / cfg.agd_target).ln();
        assert!((stats.rounds as f64) <= bound, "seed {seed}: {} > {bound}", stats.rounds);
    }
}

#[test]
fn distributed_agd_well_conditioned_converges_fast() {
    let d = 6;
    let samples: Vec<Sample> = (0..60)
        .map(|i| {
            let mut x = vec![0.0; d];
            x[i % d] = 1.0;
            Sample { context: x, action: 0, reward: 0.1 * (i % d) as f64 }
        })
        .collect();
    let problem = FLProblem::new(
        vec![
            EpochDataset { agent: AgentId(0), epoch: 1, samples: samples[..30].to_vec() },
            EpochDataset { agent: AgentId(1), epoch: 1, samples: samples[30..].to_vec() },
        ],
        LossSpec::ridge(0.01),
        Arch::Linear { feature_map: common::provided(d) },
    )
    .unwrap();
    let cfg = FLRoutineConfig { agd_target: 1e-10, ..FLRoutineConfig::new(FLKind::DistributedAgd) };
    let (model, stats) = distributed_agd(&problem, &cfg, &zero_model(&problem), &FlContext::new(0, "fl")).unwrap();
    assert!(stats.rounds <= 50, "{} rounds", stats.rounds);
    assert!(gap(&problem, &model) <= 1e-10);
}

#[test]
fn distributed_agd_rejects_zero_ridge() {
    let problem = common::ridge_problem(1, 2, 20, 3, 0.0, 0.0);
    let cfg = FLRoutineConfig::new(FLKind::DistributedAgd);
    assert!(distributed_agd(&problem, &cfg, &zero_model(&problem), &FlContext::new(0, "fl")).is_err());
}

#[test]
fn dispatcher_validation_and_accounting() {
    let mlp_problem = FLProblem::new(
        common::random_datasets(1, 2, 20, 3, 0.0),
        LossSpec::quadratic(),
        Arch::Mlp(MlpArch { input_dim: 3, hidden: 4, arms: 1 }),
    )
    .unwrap();
    let ctx = FlContext::new(0, "fl");
    for kind in [FLKind::DirectRidge, FLKind::DistributedAgd] {
        assert!(run_flroutine(&FLRoutineConfig::new(kind), &mlp_problem, None, 0, &ctx).is_err());
    }
    assert!(run_flroutine(&FLRoutineConfig::new(FLKind::LsgdPfl), &mlp_problem, None, 0, &ctx).is_err());

    let cfg = FLRoutineConfig { warm_start: false, rounds: 7, ..FLRoutineConfig::new(FLKind::Fedavg) };
    let warm = TrainedModel::Shared(init_model(*mlp_problem.arch(), 99));
    let a = run_flroutine(&cfg, &mlp_problem, Some(&warm), 3, &ctx).unwrap();
    let b = run_flroutine(&cfg, &mlp_problem, None, 3, &ctx).unwrap();
    assert_eq!(a.model, b.model);
    for kind in [FLKind::Fedavg, FLKind::Scaffold, FLKind::Fedprox] {
        let out = run_flroutine(&FLRoutineConfig { rounds: 7, ..FLRoutineConfig::new(kind) }, &mlp_problem, None, 3, &ctx).unwrap();
        assert_eq!(out.stats.rounds, 7);
    }
    let linear = common::ridge_problem(1, 2, 20, 3, 0.1, 0.0);
    let out = run_flroutine(&FLRoutineConfig::new(FLKind::DirectRidge), &linear, None, 0, &ctx).unwrap();
    assert_eq!(out.stats.rounds, 1);
}

#[test]
fn median_aggregation_with_identical_agents_keeps_fedavg_trajectory() {
    let single = common::ridge_problem(11, 1, 40, 4, 0.02, 0.0);
    let datasets = (0..5)
        .map(|m| EpochDataset { agent: AgentId(m), ..single.datasets()[0].clone() })
        .collect();
    let problem = FLProblem::new(datasets, *single.loss(), *single.arch()).unwrap();
    let mut cfg = full_batch(FLKind::Fedavg, 15, 2, 0.3);
    let a = run_flroutine(&cfg, &problem, None, 0, &FlContext::new(0, "fl").traced()).unwrap();
    cfg.aggregator = AggregatorSpec::of(AggregatorKind::CoordinateMedian);
    let b = run_flroutine(&cfg, &problem, None, 0, &FlContext::new(0, "fl").traced()).unwrap();
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!(max_abs_diff(x, y) <= 1e-12);
    }
}
