//! Leakage accounting for the secret hypothesis.
//!
//! [`instantaneous_mi`] is the closed form of the per-step conditional
//! mutual information `I(S; Z_t, A_t | β)` for a belief and a release
//! distribution. Summed along an episode it gives the total leakage by the
//! chain rule. [`enumerate_trajectory_mi`] checks that identity by brute force
//! on small instances, and [`variational_estimate`] is the sampled lower bound
//! used when only a learned posterior `Q(s | z, a, β)` is available.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::belief::{entropy, Belief};
use crate::model::{ObservationModel, Prior};
use crate::nn::{DenseNet, Head};
use crate::policy::{release_distribution, Policy, PolicyView};
use crate::{seed, Error, Result};

/// Leaf limit for trajectory enumeration.
pub const MAX_LEAVES: u128 = 1_000_000;

/// `I(S; Z, A | β)` in nats for release distribution `release` (length
/// `n_actions`, STOP excluded):
///
/// `Σ_{s,u,z,a} q(z|a,s,u) π(a) β(s,u) · ln[ p(s,z,a) / (β(s) p(z,a)) ]`
///
/// with `p(s,z,a) = Σ_u q(z|a,s,u) π(a) β(s,u)` and
/// `p(z,a) = Σ_s p(s,z,a)`. Cells with zero joint mass contribute nothing.
pub fn instantaneous_mi(belief: &Belief, release: &[f64], model: &ObservationModel) -> f64 {
    let (n, m) = (belief.n_secret(), belief.n_useful());
    let beta_s = belief.marginal_secret();
    let mut joint_s = vec![0.0; n];
    let mut total = 0.0;
    for (a, &pa) in release.iter().enumerate().take(model.n_actions()) {
        if pa <= 0.0 {
            continue;
        }
        for z in 0..model.n_obs() {
            let mut p_za = 0.0;
            for (s, js) in joint_s.iter_mut().enumerate() {
                let mut acc = 0.0;
                for u in 0..m {
                    acc += model.prob(a, s, u, z) * belief.get(s, u);
                }
                *js = acc * pa;
                p_za += *js;
            }
            if p_za <= 0.0 {
                continue;
            }
            for (s, &js) in joint_s.iter().enumerate() {
                if js > 0.0 {
                    total += js * libm::log(js / (beta_s[s] * p_za));
                }
            }
        }
    }
    if total < 0.0 && total > -1e-10 {
        0.0
    } else {
        total
    }
}

/// Per-step leakage along one episode and its running sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiTrace {
    pub per_step: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl MiTrace {
    pub fn push(&mut self, increment: f64) {
        let last = self.total();
        self.per_step.push(increment);
        self.cumulative.push(last + increment);
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Both routes to the leakage of a `horizon`-step release sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryMi {
    /// `I(S; Z^T, A^T)` computed from the enumerated joint distribution.
    pub joint: f64,
    /// `Σ_t E[I(S; Z_t, A_t | β_t)]`, weighting each prefix by its probability.
    pub accumulated: f64,
    pub leaves: u128,
}

/// Enumerates every action/observation sequence of length `horizon`.
///
/// The policy sees the exact belief after each prefix; its STOP mass is
/// dropped and the remainder renormalized, matching the leakage accounting
/// of the environment.
pub fn enumerate_trajectory_mi<P: Policy + ?Sized>(
    model: &ObservationModel,
    prior: &Prior,
    policy: &P,
    horizon: usize,
) -> Result<TrajectoryMi> {
    let branching = (model.n_actions() * model.n_obs()) as u128;
    let leaves = branching.checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if leaves > MAX_LEAVES {
        return Err(Error::TooLarge {
            needed: leaves,
            limit: MAX_LEAVES,
        });
    }
    let prior_s = prior.marginal_secret();
    let mut acc = Enumeration {
        joint: 0.0,
        accumulated: 0.0,
    };
    let weights = prior.joint().to_vec();
    enumerate(model, policy, &prior_s, horizon, 0, weights, 0.0, &mut acc)?;
    Ok(TrajectoryMi {
        joint: acc.joint.max(0.0),
        accumulated: acc.accumulated,
        leaves,
    })
}

/// `I(S; Z^T, A^T)` by brute-force enumeration of the joint distribution.
pub fn brute_force_trajectory_mi<P: Policy + ?Sized>(
    model: &ObservationModel,
    prior: &Prior,
    policy: &P,
    horizon: usize,
) -> Result<f64> {
    enumerate_trajectory_mi(model, prior, policy, horizon).map(|t| t.joint)
}

struct Enumeration {
    joint: f64,
    accumulated: f64,
}

/// `weights[s*M+u] = P(s, u, history)`.
#[allow(clippy::too_many_arguments)]
fn enumerate<P: Policy + ?Sized>(
    model: &ObservationModel,
    policy: &P,
    prior_s: &[f64],
    horizon: usize,
    depth: usize,
    weights: Vec<f64>,
    cumulative: f64,
    out: &mut Enumeration,
) -> Result<()> {
    let (n, m) = (model.n_secret(), model.n_useful());
    let p_hist: f64 = weights.iter().sum();
    if p_hist <= 0.0 {
        return Ok(());
    }
    if depth == horizon {
        for s in 0..n {
            let p_sh: f64 = weights[s * m..(s + 1) * m].iter().sum();
            if p_sh > 0.0 {
                out.joint += p_sh * libm::log(p_sh / (prior_s[s] * p_hist));
            }
        }
        return Ok(());
    }
    let belief = Belief::from_weights(n, m, weights.clone())?;
    let view = PolicyView {
        belief: &belief,
        cumulative_mi: cumulative,
        step: depth,
    };
    let dist = policy.action_dist(&view);
    if dist.len() != model.n_actions() + 1 {
        return Err(Error::LengthMismatch {
            expected: model.n_actions() + 1,
            got: dist.len(),
        });
    }
    let release = release_distribution(&dist, None);
    let inc = instantaneous_mi(&belief, &release, model);
    out.accumulated += p_hist * inc;

    for (a, &pa) in release.iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        for z in 0..model.n_obs() {
            let next: Vec<f64> = (0..n * m)
                .map(|cell| weights[cell] * pa * model.prob(a, cell / m, cell % m, z))
                .collect();
            enumerate(
                model,
                policy,
                prior_s,
                horizon,
                depth + 1,
                next,
                cumulative + inc,
                out,
            )?;
        }
    }
    Ok(())
}

/// Learned posterior `Q(s | z, a, β)` over secrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNet {
    pub net: DenseNet,
    pub n_obs: usize,
    pub n_actions: usize,
    pub n_secret: usize,
    pub n_useful: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    /// Rollout length used to visit beliefs.
    pub horizon: usize,
    pub clip: Option<f64>,
}

impl Default for QNetConfig {
    fn default() -> Self {
        QNetConfig {
            hidden: vec![32, 32],
            lr: 0.05,
            batch: 32,
            horizon: 5,
            clip: Some(5.0),
        }
    }
}

impl QNet {
    pub fn new(model: &ObservationModel, hidden: &[usize], seed: u64) -> Result<Self> {
        let (n, m) = (model.n_secret(), model.n_useful());
        let mut sizes = vec![model.n_obs() + model.n_actions() + n * m];
        sizes.extend_from_slice(hidden);
        sizes.push(n);
        let mut net = DenseNet::new(&sizes, Head::Softmax, seed)?;
        net.zero_output_layer();
        Ok(QNet {
            net,
            n_obs: model.n_obs(),
            n_actions: model.n_actions(),
            n_secret: n,
            n_useful: m,
        })
    }

    /// Wraps an existing softmax network; sizes must agree with `model`.
    pub fn from_net(net: DenseNet, model: &ObservationModel) -> Result<Self> {
        let q = QNet {
            n_obs: model.n_obs(),
            n_actions: model.n_actions(),
            n_secret: model.n_secret(),
            n_useful: model.n_useful(),
            net,
        };
        if q.net.n_inputs() != q.input_len()
            || q.net.n_outputs() != q.n_secret
            || q.net.head() != Head::Softmax
        {
            return Err(Error::Config(format!(
                "posterior network shape {:?} does not match the model",
                q.net.layer_sizes()
            )));
        }
        Ok(q)
    }

    pub fn input_len(&self) -> usize {
        self.n_obs + self.n_actions + self.n_secret * self.n_useful
    }

    pub fn encode(&self, z: usize, a: usize, belief: &Belief) -> Vec<f64> {
        let mut x = vec![0.0; self.input_len()];
        x[z] = 1.0;
        x[self.n_obs + a] = 1.0;
        x[self.n_obs + self.n_actions..].copy_from_slice(belief.joint());
        x
    }

    pub fn posterior(&self, z: usize, a: usize, belief: &Belief) -> Result<Vec<f64>> {
        self.net.forward(&self.encode(z, a, belief))
    }
}

/// Fits a [`QNet`] by minimizing cross-entropy against sampled secrets.
///
/// Beliefs are visited by rolling the policy forward from the prior for
/// `config.horizon` steps. At each visited belief one tuple is drawn:
/// `(s, u) ~ β`, `a ~ π(·|β)` over release mechanisms, `z ~ q(·|a,s,u)`; the
/// rollout then continues with the posterior after `(a, z)`. Returns the net
/// and the mean loss over the last tenth of the samples.
pub fn train_qnet<P: Policy + ?Sized>(
    model: &ObservationModel,
    prior: &Prior,
    policy: &P,
    n_samples: usize,
    config: &QNetConfig,
    seed: u64,
) -> Result<(QNet, f64)> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    if config.batch == 0 || config.horizon == 0 {
        return Err(Error::Config("batch and horizon must be positive".into()));
    }
    let mut q = QNet::new(model, &config.hidden, seed::derive(seed, 0x51, 0))?;
    let mut rng = seed::rng(seed::derive(seed, 0x51, 1));
    let m = model.n_useful();
    let mut belief = Belief::from_prior(prior);
    let mut step = 0usize;
    let mut grad_acc: Option<crate::nn::GradientBundle> = None;
    let mut in_batch = 0usize;
    let tail_start = n_samples - (n_samples / 10).max(1);
    let (mut tail_loss, mut tail_count) = (0.0, 0usize);

    for i in 0..n_samples {
        let view = PolicyView {
            belief: &belief,
            cumulative_mi: 0.0,
            step,
        };
        let release = release_distribution(&policy.action_dist(&view), None);
        let cell = seed::sample_index(belief.joint(), &mut rng);
        let (s, u) = (cell / m, cell % m);
        let a = seed::sample_index(&release, &mut rng);
        let z = seed::sample_index(model.row(a, s, u), &mut rng);

        let x = q.encode(z, a, &belief);
        let p = q.net.forward(&x)?;
        if i >= tail_start {
            tail_loss -= libm::log(p[s]);
            tail_count += 1;
        }
        let mut g = p;
        g[s] -= 1.0;
        let bundle = q.net.backward_logits(&x, &g)?;
        match grad_acc.as_mut() {
            None => grad_acc = Some(bundle),
            Some(acc) => {
                for (wa, wb) in acc.weights.iter_mut().zip(&bundle.weights) {
                    wa.iter_mut().zip(wb).for_each(|(x, y)| *x += y);
                }
                for (ba, bb) in acc.biases.iter_mut().zip(&bundle.biases) {
                    ba.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
                }
            }
        }
        in_batch += 1;
        if in_batch == config.batch || i + 1 == n_samples {
            let frac = i as f64 / n_samples as f64;
            let lr = config.lr * (1.0 - 0.9 * frac) / in_batch as f64;
            if let Some(acc) = grad_acc.take() {
                q.net
                    .sgd_step(&acc, lr, config.clip.map(|c| c * in_batch as f64))?;
            }
            in_batch = 0;
        }

        step += 1;
        match belief.update(model, a, z) {
            Ok(next) if step < config.horizon => belief = next,
            _ => {
                belief = Belief::from_prior(prior);
                step = 0;
            }
        }
    }
    Ok((q, tail_loss / tail_count.max(1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalEstimate {
    pub estimate: f64,
    /// Standard error over the `n` secret-sample groups.
    pub std_error: f64,
}

/// Sampled variational lower bound on `I(S; Z, A | β)`:
///
/// `H(β(S)) + (1/n) Σ_j (1/k) Σ_i ln Q(ŝ^j | z^i, a^i, β)`
///
/// with `ŝ^j ~ β(S)` and, for each `j`, `k` draws `u ~ β(u | ŝ^j)`,
/// `a ~ π`, `z ~ q(·|a, ŝ^j, u)`, so every `(ŝ, z, a)` triple is a joint
/// sample.
pub fn variational_estimate(
    qnet: &QNet,
    belief: &Belief,
    release: &[f64],
    model: &ObservationModel,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<VariationalEstimate> {
    if k == 0 || n == 0 {
        return Err(Error::Config("k and n must be positive".into()));
    }
    if release.len() != model.n_actions() {
        return Err(Error::LengthMismatch {
            expected: model.n_actions(),
            got: release.len(),
        });
    }
    let (ns, m, nz, na) = (
        model.n_secret(),
        model.n_useful(),
        model.n_obs(),
        model.n_actions(),
    );
    // ln Q(s | z, a, β) for every (a, z); Q does not depend on anything else here
    let mut log_q = vec![0.0; na * nz * ns];
    for a in 0..na {
        for z in 0..nz {
            let p = qnet.posterior(z, a, belief)?;
            for s in 0..ns {
                log_q[(a * nz + z) * ns + s] = libm::log(p[s]);
            }
        }
    }
    let beta_s = belief.marginal_secret();
    let h = entropy(&beta_s);
    let conditional_u: Vec<Vec<f64>> = (0..ns)
        .map(|s| {
            let row = &belief.joint()[s * m..(s + 1) * m];
            let t: f64 = row.iter().sum();
            if t > 0.0 {
                row.iter().map(|p| p / t).collect()
            } else {
                vec![1.0 / m as f64; m]
            }
        })
        .collect();

    let mut rng = seed::rng(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let s = seed::sample_index(&beta_s, &mut rng);
        let mut group = 0.0;
        for _ in 0..k {
            let u = seed::sample_index(&conditional_u[s], &mut rng);
            let a = seed::sample_index(release, &mut rng);
            let z = seed::sample_index(model.row(a, s, u), &mut rng);
            group += log_q[(a * nz + z) * ns + s];
        }
        let g = group / k as f64;
        sum += g;
        sum_sq += g * g;
    }
    let mean = sum / n as f64;
    let var = if n > 1 {
        ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0)
    } else {
        0.0
    };
    Ok(VariationalEstimate {
        estimate: h + mean,
        std_error: libm::sqrt(var / n as f64),
    })
}

/// Exact posterior `p(s | z, a, β)`; `None` when `(a, z)` has zero mass.
pub fn exact_secret_posterior(
    belief: &Belief,
    model: &ObservationModel,
    a: usize,
    z: usize,
) -> Option<Vec<f64>> {
    belief.update(model, a, z).ok().map(|b| b.marginal_secret())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HypothesisSpace;
    use crate::policy::FixedDist;

    fn model_from(n: usize, m: usize, na: usize, nz: usize, probs: Vec<f64>) -> ObservationModel {
        ObservationModel::new(HypothesisSpace::new(n, m).unwrap(), na, nz, probs).unwrap()
    }

    #[test]
    fn secret_independent_observations_leak_nothing() {
        // q depends on u only
        let mut probs = vec![];
        for _a in 0..2 {
            for _s in 0..2 {
                probs.extend([0.9, 0.1, 0.2, 0.8]);
            }
        }
        let model = model_from(2, 2, 2, 2, probs);
        let b =
            Belief::from_weights(2, 2, vec![0.3 * 0.4, 0.3 * 0.6, 0.7 * 0.4, 0.7 * 0.6]).unwrap();
        assert!(instantaneous_mi(&b, &[0.5, 0.5], &model).abs() < 1e-15);
    }

    #[test]
    fn known_secret_leaks_nothing() {
        let model = model_from(2, 2, 1, 2, vec![0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7]);
        let b = Belief::from_weights(2, 2, vec![0.0, 0.0, 0.4, 0.6]).unwrap();
        assert_eq!(instantaneous_mi(&b, &[1.0], &model), 0.0);
    }

    #[test]
    fn perfectly_revealing_action_leaks_prior_entropy() {
        // z = s exactly
        let model = model_from(2, 2, 1, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let b = Belief::uniform(2, 2);
        assert!((instantaneous_mi(&b, &[1.0], &model) - libm::log(2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_and_uninformative_trajectories() {
        let model = model_from(2, 2, 2, 2, vec![0.5; 16]);
        let prior = Prior::uniform(model.spaces());
        let pol = FixedDist::new(vec![0.3, 0.7, 0.0]);
        assert_eq!(
            brute_force_trajectory_mi(&model, &prior, &pol, 0).unwrap(),
            0.0
        );
        assert!(
            brute_force_trajectory_mi(&model, &prior, &pol, 4)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn enumeration_guard() {
        let model = model_from(2, 2, 2, 10, vec![0.1; 80]);
        let prior = Prior::uniform(model.spaces());
        let pol = FixedDist::new(vec![0.5, 0.5, 0.0]);
        assert!(matches!(
            brute_force_trajectory_mi(&model, &prior, &pol, 5),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn trace_accumulates() {
        let mut t = MiTrace::default();
        t.push(0.1);
        t.push(0.0);
        t.push(0.25);
        assert_eq!(t.cumulative, vec![0.1, 0.1, 0.35]);
        assert_eq!(t.total(), 0.35);
    }

    #[test]
    fn untrained_qnet_is_uniform_with_log_n_loss() {
        let model = model_from(2, 2, 1, 2, vec![0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7]);
        let q = QNet::new(&model, &[8], 3).unwrap();
        let p = q.posterior(1, 0, &Belief::uniform(2, 2)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((-libm::log(p[0]) - libm::log(2.0)).abs() < 1e-15);
    }

    #[test]
    fn marginal_q_gives_near_zero_estimate() {
        // a QNet that ignores (z, a) and outputs the uniform secret marginal
        let model = model_from(2, 2, 1, 2, vec![0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7]);
        let q = QNet::new(&model, &[4], 9).unwrap();
        let est =
            variational_estimate(&q, &Belief::uniform(2, 2), &[1.0], &model, 50, 50, 1).unwrap();
        assert!(est.estimate.abs() < 1e-12, "{est:?}");
    }
}
