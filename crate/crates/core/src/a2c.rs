//! Online advantage actor-critic for release policies.
//!
//! The problem is cast as reward maximization with reward `-cost`. Per
//! environment step:
//!
//! - TD error `δ = -c + γ V(x') - V(x)` (with `V(terminal) = 0`),
//! - critic descent on `δ²` (semi-gradient, target held fixed),
//! - actor descent on `-ln π(a|x) δ - entropy_coef · H(π(·|x))`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::env::{Action, Env, FeatureSpec};
use crate::error::Divergence;
use crate::nn::{DenseNet, Head};
use crate::policy::{sample_action, Policy, PolicyView, UniformRandom};
use crate::{seed, Error, Result};

const STREAM_EPISODE: u64 = 0xE1;
const STREAM_ACTION: u64 = 0xA1;
const STREAM_EVAL: u64 = 0xE7;
const STREAM_INIT: u64 = 0x1A;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A2CConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub entropy_coef: f64,
    pub hidden_sizes: Vec<usize>,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Global-norm gradient clip for both networks.
    pub clip: Option<f64>,
    /// Rewards are `-cost * reward_scale`.
    pub reward_scale: f64,
    /// Feed the remaining MI budget to the networks (MI budgets only).
    pub budget_feature: bool,
    /// Abort when an evaluation's mean cost exceeds this multiple of the
    /// uniform-random policy's cost.
    pub divergence_factor: f64,
}

impl Default for A2CConfig {
    fn default() -> Self {
        A2CConfig {
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            gamma: 0.99,
            episodes: 50_000,
            entropy_coef: 0.01,
            hidden_sizes: vec![256, 256],
            eval_every: 5_000,
            eval_episodes: 1_000,
            seed: 0,
            clip: Some(5.0),
            reward_scale: 1.0,
            budget_feature: true,
            divergence_factor: 10.0,
        }
    }
}

impl A2CConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr_actor > 0.0) || !(self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.episodes == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("episodes, eval_every and eval_episodes must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.entropy_coef >= 0.0) || !(self.reward_scale > 0.0) {
            return bad("entropy_coef must be >= 0 and reward_scale > 0");
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// Actor (softmax over release mechanisms then STOP) and critic (scalar).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2CPolicy {
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub features: FeatureSpec,
}

impl A2CPolicy {
    pub fn new(
        features: FeatureSpec,
        n_actions: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = vec![features.len()];
        sizes.extend_from_slice(hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(n_actions + 1);
        sizes.push(1);
        let mut actor = DenseNet::new(
            &actor_sizes,
            Head::Softmax,
            seed::derive(seed, STREAM_INIT, 0),
        )?;
        actor.zero_output_layer();
        let mut critic = DenseNet::new(&sizes, Head::Linear, seed::derive(seed, STREAM_INIT, 1))?;
        critic.zero_output_layer();
        Ok(A2CPolicy {
            actor,
            critic,
            features,
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(x)?[0])
    }

    /// Checks that both networks agree with the feature layout.
    pub fn validate(&self) -> Result<()> {
        self.actor.validate()?;
        self.critic.validate()?;
        if self.actor.n_inputs() != self.features.len()
            || self.critic.n_inputs() != self.features.len()
        {
            return Err(Error::LengthMismatch {
                expected: self.features.len(),
                got: self.actor.n_inputs(),
            });
        }
        if self.actor.head() != Head::Softmax
            || self.critic.head() != Head::Linear
            || self.critic.n_outputs() != 1
        {
            return Err(Error::Config(
                "actor needs a softmax head and critic a scalar linear head".into(),
            ));
        }
        Ok(())
    }
}

impl Policy for A2CPolicy {
    fn n_actions(&self) -> usize {
        self.actor.n_outputs() - 1
    }

    fn action_dist(&self, view: &PolicyView<'_>) -> Vec<f64> {
        self.actor
            .forward(&self.features.encode(view))
            .expect("feature length matches the actor")
    }
}

/// `δ = -cost + γ V(x') - V(x)`; `next = None` marks a terminal transition.
pub fn td_error(
    critic: &DenseNet,
    x: &[f64],
    next: Option<&[f64]>,
    cost: f64,
    gamma: f64,
) -> Result<f64> {
    let v = critic.forward(x)?[0];
    let v_next = match next {
        Some(xn) => critic.forward(xn)?[0],
        None => 0.0,
    };
    Ok(-cost + gamma * v_next - v)
}

/// Gradient of `-ln π(a) δ - c H(π)` with respect to the actor logits.
pub fn actor_logit_grad(probs: &[f64], action: usize, delta: f64, entropy_coef: f64) -> Vec<f64> {
    let h: f64 = probs.iter().map(|&p| -p * libm::log(p)).sum();
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let pg = delta * (p - if j == action { 1.0 } else { 0.0 });
            pg + entropy_coef * p * (libm::log(p) + h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Training episodes completed at this checkpoint.
    pub checkpoint: usize,
    pub mean_cost: f64,
    pub mean_tau: f64,
    pub mean_conf_u: f64,
    pub acc_u: f64,
    pub acc_s: f64,
    pub violation_rate: f64,
    pub mean_mi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EvalRecord>,
}

/// Trains a policy on `env`. Episode `i` uses environment seed
/// `derive(config.seed, ·, i)`, so identical configs give identical logs.
pub fn train(env: &Env<'_>, config: &A2CConfig) -> Result<(A2CPolicy, TrainingLog)> {
    config.validate()?;
    let model = env.model();
    let na = model.n_actions();
    let mut features = FeatureSpec::new(
        model.n_secret(),
        model.n_useful(),
        *env.privacy(),
        env.costs().t_max,
    );
    features.budget_feature = config.budget_feature;
    let mut policy = A2CPolicy::new(features, na, &config.hidden_sizes, config.seed)?;
    let mut log = TrainingLog::default();

    let eval_seed = seed::derive(config.seed, STREAM_EVAL, 0);
    let baseline = evaluate(
        &UniformRandom { n_actions: na },
        env,
        config.eval_episodes,
        eval_seed,
    )?;
    let limit = config.divergence_factor * baseline.mean_cost.max(env.costs().time_cost);

    for ep in 0..config.episodes {
        let mut state = env.reset(seed::derive(config.seed, STREAM_EPISODE, ep as u64));
        let mut rng = seed::rng(seed::derive(config.seed, STREAM_ACTION, ep as u64));
        let mut x = features.encode(&state.view());
        loop {
            let probs = policy.actor.forward(&x)?;
            if probs.iter().any(|p| !p.is_finite()) {
                return Err(diverged(ep, f64::NAN, limit, baseline.mean_cost, &log));
            }
            let action = sample_action(&probs, &mut rng);
            let out = env.step(&mut state, action, &probs)?;
            let next_x = if out.done {
                None
            } else {
                Some(features.encode(&state.view()))
            };
            let delta = td_error(
                &policy.critic,
                &x,
                next_x.as_deref(),
                out.cost * config.reward_scale,
                config.gamma,
            )?;

            let critic_grad = policy.critic.backward(&x, &[-2.0 * delta])?;
            let a_idx = match action {
                Action::Release(a) => a,
                Action::Stop => na,
            };
            let logit_grad = actor_logit_grad(&probs, a_idx, delta, config.entropy_coef);
            let actor_grad = policy.actor.backward_logits(&x, &logit_grad)?;
            policy
                .critic
                .sgd_step(&critic_grad, config.lr_critic, config.clip)?;
            policy
                .actor
                .sgd_step(&actor_grad, config.lr_actor, config.clip)?;

            match next_x {
                Some(nx) => x = nx,
                None => break,
            }
        }

        let done_eps = ep + 1;
        if done_eps % config.eval_every == 0 || done_eps == config.episodes {
            let m = evaluate(&policy, env, config.eval_episodes, eval_seed)?;
            let rec = EvalRecord {
                checkpoint: done_eps,
                mean_cost: m.mean_cost,
                mean_tau: m.mean_tau,
                mean_conf_u: m.mean_conf_u,
                acc_u: m.acc_u,
                acc_s: m.acc_s,
                violation_rate: m.violation_rate,
                mean_mi: m.mean_mi,
            };
            let cost = rec.mean_cost;
            log.records.push(rec);
            if !(cost <= limit) {
                return Err(diverged(done_eps, cost, limit, baseline.mean_cost, &log));
            }
        }
    }
    Ok((policy, log))
}

fn diverged(
    checkpoint: usize,
    mean_cost: f64,
    limit: f64,
    baseline_cost: f64,
    log: &TrainingLog,
) -> Error {
    Error::Diverged(Box::new(Divergence {
        checkpoint,
        mean_cost,
        limit,
        baseline_cost,
        log: log.clone(),
    }))
}

/// Summary of frozen-policy rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_cost: f64,
    pub sd_cost: f64,
    pub mean_tau: f64,
    pub sd_tau: f64,
    /// `max_u β(u)` when the episode ended.
    pub mean_conf_u: f64,
    pub sd_conf_u: f64,
    /// Declared useful hypothesis equals the hidden one.
    pub acc_u: f64,
    /// Bayes adversary: argmax of the final secret marginal equals hidden `s`.
    pub acc_s: f64,
    pub violation_rate: f64,
    pub mean_mi: f64,
    pub acc_u_per_class: Vec<f64>,
    pub acc_s_per_class: Vec<f64>,
}

impl EvalMetrics {
    pub fn se_tau(&self) -> f64 {
        self.sd_tau / libm::sqrt(self.episodes as f64)
    }

    pub fn se_conf_u(&self) -> f64 {
        self.sd_conf_u / libm::sqrt(self.episodes as f64)
    }

    pub fn se_cost(&self) -> f64 {
        self.sd_cost / libm::sqrt(self.episodes as f64)
    }

    /// `acc_u - acc_s`.
    pub fn gap(&self) -> f64 {
        self.acc_u - self.acc_s
    }
}

/// One finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub hidden: (usize, usize),
    pub cost: f64,
    pub tau: usize,
    pub conf_u: f64,
    pub declared_u: usize,
    pub guessed_s: usize,
    pub violation: bool,
    pub cumulative_mi: f64,
    pub final_belief: Belief,
}

/// Runs one episode with environment seed `env_seed` and action seed
/// `action_seed`.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    env: &Env<'_>,
    env_seed: u64,
    action_seed: u64,
) -> Result<EpisodeSummary> {
    let mut state = env.reset(env_seed);
    let mut rng = seed::rng(action_seed);
    let mut cost = 0.0;
    let mut violation = false;
    let mut declared = None;
    while !state.is_done() {
        let dist = policy.action_dist(&state.view());
        let action = sample_action(&dist, &mut rng);
        let out = env.step(&mut state, action, &dist)?;
        cost += out.cost;
        violation |= out.violation;
        if out.declared_useful.is_some() {
            declared = out.declared_useful;
        }
    }
    let (u_hat, conf_u) = state.belief.max_confidence_useful();
    Ok(EpisodeSummary {
        hidden: state.hidden(),
        cost,
        tau: state.step,
        conf_u,
        declared_u: declared.unwrap_or(u_hat),
        guessed_s: state.belief.max_confidence_secret().0,
        violation,
        cumulative_mi: state.cumulative_mi,
        final_belief: state.belief,
    })
}

/// Order-independent accumulator for [`EvalMetrics`].
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    n: usize,
    cost: (f64, f64),
    tau: (f64, f64),
    conf: (f64, f64),
    hits_u: usize,
    hits_s: usize,
    violations: usize,
    mi: f64,
    per_u: Vec<(usize, usize)>,
    per_s: Vec<(usize, usize)>,
}

impl MetricsAccumulator {
    pub fn new(n_secret: usize, n_useful: usize) -> Self {
        MetricsAccumulator {
            per_u: vec![(0, 0); n_useful],
            per_s: vec![(0, 0); n_secret],
            ..Default::default()
        }
    }

    pub fn push(&mut self, e: &EpisodeSummary) {
        self.n += 1;
        let tau = e.tau as f64;
        self.cost.0 += e.cost;
        self.cost.1 += e.cost * e.cost;
        self.tau.0 += tau;
        self.tau.1 += tau * tau;
        self.conf.0 += e.conf_u;
        self.conf.1 += e.conf_u * e.conf_u;
        let (s, u) = e.hidden;
        let hit_u = e.declared_u == u;
        let hit_s = e.guessed_s == s;
        self.hits_u += usize::from(hit_u);
        self.hits_s += usize::from(hit_s);
        self.violations += usize::from(e.violation);
        self.mi += e.cumulative_mi;
        self.per_u[u].0 += usize::from(hit_u);
        self.per_u[u].1 += 1;
        self.per_s[s].0 += usize::from(hit_s);
        self.per_s[s].1 += 1;
    }

    pub fn finish(&self) -> EvalMetrics {
        let n = self.n.max(1) as f64;
        let sd = |(s, sq): (f64, f64)| {
            let mean = s / n;
            if self.n > 1 {
                libm::sqrt(((sq - n * mean * mean) / (n - 1.0)).max(0.0))
            } else {
                0.0
            }
        };
        let rate = |(h, t): (usize, usize)| {
            if t == 0 {
                f64::NAN
            } else {
                h as f64 / t as f64
            }
        };
        EvalMetrics {
            episodes: self.n,
            mean_cost: self.cost.0 / n,
            sd_cost: sd(self.cost),
            mean_tau: self.tau.0 / n,
            sd_tau: sd(self.tau),
            mean_conf_u: self.conf.0 / n,
            sd_conf_u: sd(self.conf),
            acc_u: self.hits_u as f64 / n,
            acc_s: self.hits_s as f64 / n,
            violation_rate: self.violations as f64 / n,
            mean_mi: self.mi / n,
            acc_u_per_class: self.per_u.iter().copied().map(rate).collect(),
            acc_s_per_class: self.per_s.iter().copied().map(rate).collect(),
        }
    }
}

/// Evaluates a frozen policy over `n_episodes` seeded episodes.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env: &Env<'_>,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalMetrics> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be at least 1".into()));
    }
    let model = env.model();
    let mut acc = MetricsAccumulator::new(model.n_secret(), model.n_useful());
    for i in 0..n_episodes as u64 {
        let e = rollout(
            policy,
            env,
            seed::derive(seed, STREAM_EPISODE, i),
            seed::derive(seed, STREAM_ACTION, i),
        )?;
        acc.push(&e);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_error_conventions() {
        let critic = DenseNet::zeros(&[2, 1], Head::Linear).unwrap();
        assert_eq!(
            td_error(&critic, &[0.1, 0.2], Some(&[0.3, 0.4]), 1.0, 0.9).unwrap(),
            -1.0
        );
        assert_eq!(td_error(&critic, &[0.1, 0.2], None, 0.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn hand_set_critic_td_error() {
        // V(x) = 2 x0 - x1 + 0.5
        let critic = DenseNet::from_parts(
            &[2, 1],
            Head::Linear,
            0.01,
            vec![vec![2.0, -1.0]],
            vec![vec![0.5]],
        )
        .unwrap();
        // V(x) = 2*0.3 - 0.1 + 0.5 = 1.0 ; V(x') = 2*0.1 - 0.6 + 0.5 = 0.1
        // δ = -0.5 + 0.9 * 0.1 - 1.0 = -1.41
        let d = td_error(&critic, &[0.3, 0.1], Some(&[0.1, 0.6]), 0.5, 0.9).unwrap();
        assert!((d + 1.41).abs() < 1e-14, "{d}");
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let logits = [0.2, -0.4, 0.9];
        let loss = |l: &[f64]| {
            let p = crate::nn::softmax(l);
            let h: f64 = p.iter().map(|&x| -x * libm::log(x)).sum();
            -libm::log(p[1]) * 0.7 - 0.3 * h
        };
        let g = actor_logit_grad(&crate::nn::softmax(&logits), 1, 0.7, 0.3);
        for j in 0..3 {
            let mut lp = logits;
            let mut lm = logits;
            lp[j] += 1e-6;
            lm[j] -= 1e-6;
            let fd = (loss(&lp) - loss(&lm)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-8, "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(A2CConfig::default().validate().is_ok());
        assert!(A2CConfig {
            lr_actor: 0.0,
            ..A2CConfig::default()
        }
        .validate()
        .is_err());
        assert!(A2CConfig {
            episodes: 0,
            ..A2CConfig::default()
        }
        .validate()
        .is_err());
    }
}
