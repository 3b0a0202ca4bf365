mod common;

use fedigw::base::{rng_stream, AgentId, EpochDataset, Sample};
use fedigw::envs::{parse_multilabel, write_multilabel, EnvSpec, Environment, MultilabelEnv, SyntheticEnv};
use fedigw::flcore::FLProblem;
use fedigw::flprotocols::{direct_ridge, lsgd_pfl, FLKind, FLRoutineConfig, FlContext, PersonalizedModel};
use fedigw::models::{Arch, FeatureMap, LossSpec, Model};
use fedigw::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn noiseless(mut spec: EnvSpec) -> EnvSpec {
    spec.noise_std = 0.0;
    spec
}

fn synthetic(env: &Environment) -> &SyntheticEnv {
    match env {
        Environment::Synthetic(s) => s,
        _ => panic!("expected synthetic"),
    }
}

/// Noiseless interaction log with uniformly random actions.
fn collect(env: &Environment, seed: u64, per_agent: usize) -> Vec<EpochDataset> {
    (0..env.agents())
        .map(|m| {
            let mut s = rng_stream(seed, &format!("test/env/{m}"));
            let mut ds = EpochDataset::new(AgentId(m), 1);
            for _ in 0..per_agent {
                let mut step = env.step(AgentId(m), &mut s).unwrap();
                let a = s.gen_range(0..env.arms());
                let reward = step.reveal(a).unwrap();
                ds.samples.push(Sample {
                    context: step.context().to_vec(),
                    action: a,
                    reward,
                });
            }
            ds
        })
        .collect()
}

#[test]
fn realizability_via_direct_ridge() {
    for (d, k, m) in [(5, 10, 4), (3, 4, 2), (1, 3, 1), (8, 2, 3)] {
        let env = Environment::build(&noiseless(EnvSpec::synthetic_linear(m, d, k)), 11).unwrap();
        let dim = d * k;
        let data = collect(&env, 3, (50 * dim).div_ceil(m));
        let problem = FLProblem::new(data, LossSpec::ridge(1e-10), Arch::Linear { feature_map: env.feature_map() }).unwrap();
        let (model, _) = direct_ridge(&problem, &FlContext::new(0, "t")).unwrap();
        let mut s = rng_stream(99, "test/fresh");
        let mut worst: f64 = 0.0;
        for t in 0..500 {
            let agent = AgentId(t % m);
            let step = env.step(agent, &mut s).unwrap();
            let pred = model.predict_all(step.context()).unwrap();
            for (p, mu) in pred.iter().zip(&step.oracle().expected) {
                worst = worst.max((p - mu).abs());
            }
        }
        assert!(worst <= 1e-5, "d={d} k={k}: max error {worst}");
    }
}

#[test]
fn true_parameter_reproduces_expected_reward() {
    let env = Environment::build(&EnvSpec::synthetic_personalized(3, 4, 5, 8), 5).unwrap();
    let syn = synthetic(&env);
    let map = env.feature_map();
    let mut s = rng_stream(5, "test");
    for t in 0..200 {
        let agent = AgentId(t % 3);
        let step = env.step(agent, &mut s).unwrap();
        let theta = syn.true_parameter(agent);
        for a in 0..5 {
            let phi = map.feature(step.context(), a).unwrap();
            let lin: f64 = phi.iter().zip(&theta).map(|(x, w)| x * w).sum();
            assert!((lin - step.oracle().expected[a]).abs() < 1e-12);
        }
    }
}

#[test]
fn rewards_contexts_and_oracle_are_consistent() {
    let env = Environment::build(&EnvSpec::synthetic_linear(3, 6, 7), 2).unwrap();
    let quiet = Environment::build(&noiseless(EnvSpec::synthetic_linear(3, 6, 7)), 2).unwrap();
    let mut s = rng_stream(2, "x");
    for t in 0..2000 {
        let agent = AgentId(t % 3);
        let step = env.step(agent, &mut s).unwrap();
        let norm: f64 = step.context().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1.0 + 1e-12);
        let o = step.oracle();
        for &mu in &o.expected {
            assert!((0.1..=0.9).contains(&mu));
            assert!(o.best_value() >= mu);
        }
        for a in 0..7 {
            let mut st = env.step(agent, &mut rng_stream(t as u64, "y")).unwrap();
            let r = st.reveal(a).unwrap();
            assert!((0.0..=1.0).contains(&r));
        }
        // noiseless: revealed reward is the expectation and the oracle arm pays most
        let rewards: Vec<f64> = (0..7)
            .map(|a| quiet.step(agent, &mut rng_stream(t as u64, "z")).unwrap().reveal(a).unwrap())
            .collect();
        let st = quiet.step(agent, &mut rng_stream(t as u64, "z")).unwrap();
        assert_eq!(rewards, st.oracle().expected);
        let best = rewards.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(rewards[st.oracle().best_action], best);
    }
}

#[test]
fn determinism_and_invalid_dims() {
    let spec = EnvSpec::synthetic_linear(2, 4, 3);
    let a = Environment::build(&spec, 8).unwrap();
    let b = Environment::build(&spec, 8).unwrap();
    let mut sa = rng_stream(8, "env/agent/1");
    let mut sb = rng_stream(8, "env/agent/1");
    for _ in 0..50 {
        let mut x = a.step(AgentId(1), &mut sa).unwrap();
        let mut y = b.step(AgentId(1), &mut sb).unwrap();
        assert_eq!(x.context(), y.context());
        assert_eq!(x.reveal(2).unwrap().to_bits(), y.reveal(2).unwrap().to_bits());
    }
    for bad in [EnvSpec::synthetic_linear(0, 4, 3), EnvSpec::synthetic_linear(2, 0, 3), EnvSpec::synthetic_linear(2, 4, 0)] {
        assert!(matches!(Environment::build(&bad, 1), Err(Error::InvalidArgument(_))));
    }
    assert!(matches!(
        Environment::build(&EnvSpec::synthetic_personalized(2, 4, 3, 13), 1),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn zero_private_block_matches_linear_env() {
    let lin = Environment::build(&EnvSpec::synthetic_linear(3, 4, 5), 21).unwrap();
    let per = Environment::build(&EnvSpec::synthetic_personalized(3, 4, 5, 20), 21).unwrap();
    for m in 0..3 {
        let mut s1 = rng_stream(1, "s");
        let mut s2 = rng_stream(1, "s");
        for _ in 0..100 {
            let mut a = lin.step(AgentId(m), &mut s1).unwrap();
            let mut b = per.step(AgentId(m), &mut s2).unwrap();
            assert_eq!(a.context(), b.context());
            assert_eq!(a.oracle(), b.oracle());
            assert_eq!(a.reveal(0).unwrap().to_bits(), b.reveal(0).unwrap().to_bits());
        }
    }
}

#[test]
fn equal_private_blocks_give_equal_surfaces() {
    let env = Environment::build(&EnvSpec::synthetic_personalized(2, 3, 4, 6), 4).unwrap();
    let syn = synthetic(&env).clone();
    let shared = syn.omega(AgentId(0))[..6].to_vec();
    let private = syn.omega(AgentId(1))[6..].to_vec();
    let twin = syn.with_parameters(shared, vec![private.clone(), private]).unwrap();
    let mut s = rng_stream(3, "c");
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| s.gen_range(-0.5..0.5)).collect();
        assert_eq!(twin.expected_rewards(AgentId(0), &x), twin.expected_rewards(AgentId(1), &x));
    }
}

/// Dense ridge on the expanded feature map with a per-coordinate penalty.
fn expanded_oracle(env: &SyntheticEnv, data: &[EpochDataset], penalty: &[f64]) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = data
        .iter()
        .flat_map(|ds| ds.samples.iter().map(move |s| env.expanded_feature(ds.agent, &s.context, s.action).unwrap()))
        .collect();
    let r: Vec<f64> = data.iter().flat_map(|ds| ds.samples.iter().map(|s| s.reward)).collect();
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    let a = x.transpose() * &x / n + DMatrix::from_diagonal(&DVector::from_column_slice(penalty));
    let b = x.transpose() * DVector::from_vec(r) / n;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn expanded_feature_oracle_recovers_parameters() {
    let (m, d, k, s) = (3, 3, 4, 5);
    let env = Environment::build(&noiseless(EnvSpec::synthetic_personalized(m, d, k, s)), 17).unwrap();
    let syn = synthetic(&env);
    let tilde = s + m * (d * k - s);
    let data = collect(&env, 6, (10 * tilde).div_ceil(m));
    let est = expanded_oracle(syn, &data, &vec![1e-10; tilde]);
    let truth = syn.true_expanded_parameter();
    let err = est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "max coefficient error {err}");
}

#[test]
fn lsgd_pfl_reaches_expanded_oracle() {
    let (m, d, k, s) = (3, 3, 2, 2);
    let env = Environment::build(&EnvSpec::synthetic_personalized(m, d, k, s), 23).unwrap();
    let syn = synthetic(&env);
    let dim = d * k;
    let data = collect(&env, 7, 200);
    let n: usize = data.iter().map(|ds| ds.len()).sum();
    let lambda = 1.0 / n as f64;
    let arch = Arch::Linear { feature_map: env.feature_map() };
    let problem = FLProblem::new(data.clone(), LossSpec::ridge(lambda), arch).unwrap().with_split(s).unwrap();

    // sum_m (n_m/n) L_m penalises private block m with weight n_m/n
    let mut penalty = vec![lambda; s];
    for ds in &data {
        penalty.extend(std::iter::repeat_n(lambda * ds.len() as f64 / n as f64, dim - s));
    }
    let oracle = expanded_oracle(syn, &data, &penalty);
    let objective = |agent_params: &dyn Fn(usize) -> Vec<f64>| -> f64 {
        data.iter()
            .enumerate()
            .map(|(pos, ds)| {
                let model = Model::unflatten(arch, agent_params(pos).into()).unwrap();
                ds.len() as f64 / n as f64 * model.batch_loss(problem.loss(), &ds.samples).unwrap()
            })
            .sum()
    };
    let oracle_params = |pos: usize| {
        let mut p = oracle[..s].to_vec();
        let off = s + pos * (dim - s);
        p.extend_from_slice(&oracle[off..off + dim - s]);
        p
    };
    let best = objective(&oracle_params);

    let mut cfg = FLRoutineConfig::new(FLKind::LsgdPfl);
    cfg.rounds = 3000;
    cfg.local_steps = 2;
    cfg.local_lr = 1.0;
    cfg.batch_size = usize::MAX;
    let init = PersonalizedModel::replicate(&vec![0.0; dim], s, m);
    let (trained, stats) = lsgd_pfl(&problem, &cfg, &init, &FlContext::new(1, "t")).unwrap();
    let got = objective(&|pos| trained.agent_params(pos));
    assert!(got - best <= 1e-4 && got - best >= -1e-12, "gap {}", got - best);
    assert_eq!(stats.scalars_up, 3000 * (m * s) as u64);

    // per-agent parameters approach the oracle blocks too
    for pos in 0..m {
        let diff = trained
            .agent_params(pos)
            .iter()
            .zip(oracle_params(pos))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-2, "agent {pos}: {diff}");
    }
}

#[test]
fn multilabel_toy_membership() {
    let data = parse_multilabel("2 2 2\n0 0:1\n1 1:1\n".as_bytes()).unwrap();
    let env = MultilabelEnv::new(data, 1).unwrap();
    let env = Environment::Multilabel(env);
    let mut s = rng_stream(0, "m");
    let mut seen = [false; 2];
    for _ in 0..50 {
        let mut step = env.step(AgentId(0), &mut s).unwrap();
        let ex = if step.context()[0] == 1.0 { 0 } else { 1 };
        seen[ex] = true;
        let r = step.reveal(0).unwrap();
        assert_eq!(r, if ex == 0 { 1.0 } else { 0.0 });
        assert_eq!(step.oracle().best_value(), 1.0);
    }
    assert!(seen[0] && seen[1]);
}

#[test]
fn bundled_toy_dataset() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/toy_multilabel.txt");
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.lines().count() <= 50);
    let data = parse_multilabel(text.as_bytes()).unwrap();
    assert_eq!(data.dropped, 1);
    let mut buf = Vec::new();
    write_multilabel(&data, &mut buf).unwrap();
    assert_eq!(parse_multilabel(buf.as_slice()).unwrap().examples, data.examples);

    let env = Environment::build(&EnvSpec::multilabel(2, path), 0).unwrap();
    assert_eq!((env.context_len(), env.arms()), (12, 4));
    let mut s = rng_stream(0, "toy");
    for _ in 0..200 {
        let mut step = env.step(AgentId(1), &mut s).unwrap();
        let norm: f64 = step.context().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let r = step.reveal(s.gen_range(0..4)).unwrap();
        assert!(r == 0.0 || r == 1.0);
    }
}

#[test]
fn header_dimensions_define_shape() {
    let bibtex = "1 1835 159\n3,158 0:1 1834:2\n";
    let env = MultilabelEnv::new(parse_multilabel(bibtex.as_bytes()).unwrap(), 1).unwrap();
    assert_eq!((env.context_dim(), env.arms()), (1835, 159));
    let delicious = "1 500 983\n982 499:1\n";
    let env = MultilabelEnv::new(parse_multilabel(delicious.as_bytes()).unwrap(), 1).unwrap();
    assert_eq!((env.context_dim(), env.arms()), (500, 983));
    assert!(matches!(
        Environment::build(&EnvSpec::multilabel(1, "/nonexistent/file"), 0),
        Err(Error::Io(_))
    ));
    let _ = FeatureMap::ConcatOnehot { context_dim: 1, arms: 1 };
}
