use aput_core::a2c::{evaluate, train, A2CConfig};
use aput_core::instances::{desk_costs, desk_model, desk_prior, desk_privacy};
use aput_core::policy::{AlwaysStop, UniformRandom};
use aput_core::{
    CostParams, Env, HypothesisSpace, ObservationModel, Policy, PolicyView, Prior, PrivacySpec,
};

fn small(episodes: usize, seed: u64) -> A2CConfig {
    A2CConfig {
        lr_actor: 0.01,
        lr_critic: 0.02,
        episodes,
        hidden_sizes: vec![16, 16],
        eval_every: episodes / 5,
        eval_episodes: 200,
        seed,
        reward_scale: 0.05,
        ..A2CConfig::default()
    }
}

/// One informative step is enough: mechanism 0 reveals `u` exactly, and
/// mechanism 1 is blind. After one release the useful hypothesis is known.
fn bandit() -> (ObservationModel, Prior) {
    let mut probs = vec![];
    for _s in 0..2 {
        probs.extend([1.0, 0.0, 0.0, 1.0]);
    }
    for _ in 0..4 {
        probs.extend([0.5, 0.5]);
    }
    let spaces = HypothesisSpace::new(2, 2).unwrap();
    (
        ObservationModel::new(spaces.clone(), 2, 2, probs).unwrap(),
        Prior::uniform(&spaces),
    )
}

#[test]
fn actor_learns_the_cheaper_action() {
    let (model, prior) = bandit();
    let costs = CostParams {
        lambda: 10.0,
        time_cost: 1.0,
        forbidden_cost: 100.0,
        t_max: 1,
        ..CostParams::default()
    };
    let env = Env::new(
        &model,
        &prior,
        costs,
        PrivacySpec::BeliefThreshold { l_b: 1.0 },
    )
    .unwrap();
    let (policy, _) = train(
        &env,
        &A2CConfig {
            entropy_coef: 0.0,
            ..small(5_000, 3)
        },
    )
    .unwrap();
    let view_belief = aput_core::Belief::from_prior(&prior);
    let d = policy.action_dist(&PolicyView {
        belief: &view_belief,
        cumulative_mi: 0.0,
        step: 0,
    });
    // releasing through mechanism 0 costs 1; stopping costs 5, mechanism 1 costs 6
    assert!(d[0] > 0.95, "{d:?}");
}

#[test]
fn free_errors_mean_immediate_stop() {
    let (model, prior) = (desk_model(), desk_prior());
    let costs = CostParams {
        lambda: 0.0,
        ..desk_costs()
    };
    let env = Env::new(&model, &prior, costs, desk_privacy()).unwrap();
    let (policy, _) = train(
        &env,
        &A2CConfig {
            entropy_coef: 0.0,
            reward_scale: 1.0,
            ..small(5_000, 4)
        },
    )
    .unwrap();
    let m = evaluate(&policy, &env, 1_000, 1).unwrap();
    assert!(m.mean_tau < 0.02, "{}", m.mean_tau);
}

#[test]
fn heavy_entropy_keeps_policy_uniform() {
    let (model, prior) = (desk_model(), desk_prior());
    let env = Env::new(&model, &prior, desk_costs(), desk_privacy()).unwrap();
    let (policy, _) = train(
        &env,
        &A2CConfig {
            entropy_coef: 10.0,
            ..small(3_000, 5)
        },
    )
    .unwrap();
    let b = aput_core::Belief::from_prior(&prior);
    let d = policy.action_dist(&PolicyView {
        belief: &b,
        cumulative_mi: 0.0,
        step: 0,
    });
    assert!(d.iter().all(|p| (p - 1.0 / 3.0).abs() < 0.05), "{d:?}");
    let trained = evaluate(&policy, &env, 4_000, 2).unwrap();
    let random = evaluate(&UniformRandom { n_actions: 2 }, &env, 4_000, 2).unwrap();
    let se = (trained.se_cost().powi(2) + random.se_cost().powi(2)).sqrt();
    assert!((trained.mean_cost - random.mean_cost).abs() < 4.0 * se + 0.1 * random.mean_cost);
}

#[test]
fn training_is_deterministic() {
    let (model, prior) = (desk_model(), desk_prior());
    let env = Env::new(&model, &prior, desk_costs(), desk_privacy()).unwrap();
    let (p1, l1) = train(&env, &small(1_000, 9)).unwrap();
    let (p2, l2) = train(&env, &small(1_000, 9)).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
    assert_eq!(l1.records.len(), 5);
    let (_, l3) = train(&env, &small(1_000, 10)).unwrap();
    assert_ne!(l1, l3);
}

#[test]
fn log_has_one_record_per_window() {
    let (model, prior) = (desk_model(), desk_prior());
    let env = Env::new(&model, &prior, desk_costs(), desk_privacy()).unwrap();
    let cfg = A2CConfig {
        eval_every: 300,
        ..small(1_000, 1)
    };
    let (_, log) = train(&env, &cfg).unwrap();
    assert_eq!(log.records.len(), 4);
    assert_eq!(log.records.last().unwrap().checkpoint, 1_000);
}

#[test]
fn always_stop_on_uniform_three_by_three() {
    let spaces = HypothesisSpace::new(3, 3).unwrap();
    let model = ObservationModel::new(spaces.clone(), 1, 2, vec![0.5; 18]).unwrap();
    let prior = Prior::uniform(&spaces);
    let env = Env::new(
        &model,
        &prior,
        CostParams::default(),
        PrivacySpec::BeliefThreshold { l_b: 0.9 },
    )
    .unwrap();
    let m = evaluate(&AlwaysStop { n_actions: 1 }, &env, 9_000, 3).unwrap();
    assert_eq!(m.mean_tau, 0.0);
    // the declaration is always index 0, right for one third of the hidden draws
    assert!((m.acc_u - 1.0 / 3.0).abs() < 4.0 * (2.0f64 / 9.0 / 9_000.0).sqrt());
    assert_eq!(m.violation_rate, 0.0);
}

#[test]
fn uninformative_model_accuracy_is_the_prior_maximum() {
    let spaces = HypothesisSpace::new(2, 2).unwrap();
    let model = ObservationModel::new(spaces, 2, 2, vec![0.5; 16]).unwrap();
    let prior = Prior::new(2, 2, vec![0.1, 0.6, 0.1, 0.2]).unwrap();
    let env = Env::new(
        &model,
        &prior,
        CostParams::default(),
        PrivacySpec::BeliefThreshold { l_b: 0.9 },
    )
    .unwrap();
    let m = evaluate(&UniformRandom { n_actions: 2 }, &env, 10_000, 3).unwrap();
    assert!((m.acc_u - 0.8).abs() < 4.0 * (0.16f64 / 10_000.0).sqrt());
}
