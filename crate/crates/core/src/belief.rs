//! Joint posterior over `(secret, useful)` and exact Bayesian filtering.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{ObservationModel, Prior};
use crate::{Error, Result};

/// Smallest admissible normalizing constant in [`Belief::update`].
pub const MIN_EVIDENCE: f64 = 1e-300;

/// Joint belief `β(s, u)`, row-major over secrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    n_secret: usize,
    n_useful: usize,
    joint: Vec<f64>,
}

impl Belief {
    /// Builds a belief from nonnegative weights, normalizing them.
    pub fn from_weights(n_secret: usize, n_useful: usize, mut joint: Vec<f64>) -> Result<Self> {
        if joint.len() != n_secret * n_useful {
            return Err(Error::LengthMismatch {
                expected: n_secret * n_useful,
                got: joint.len(),
            });
        }
        if joint.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config(
                "belief weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = joint.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("belief weights sum to zero".into()));
        }
        for p in &mut joint {
            *p /= total;
        }
        Ok(Belief {
            n_secret,
            n_useful,
            joint,
        })
    }

    pub fn uniform(n_secret: usize, n_useful: usize) -> Self {
        let k = n_secret * n_useful;
        Belief {
            n_secret,
            n_useful,
            joint: vec![1.0 / k as f64; k],
        }
    }

    pub fn from_prior(prior: &Prior) -> Self {
        Belief {
            n_secret: prior.n_secret(),
            n_useful: prior.n_useful(),
            joint: prior.joint().to_vec(),
        }
    }

    pub fn n_secret(&self) -> usize {
        self.n_secret
    }

    pub fn n_useful(&self) -> usize {
        self.n_useful
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    #[inline]
    pub fn get(&self, s: usize, u: usize) -> f64 {
        self.joint[s * self.n_useful + u]
    }

    /// Probability of observing `z` after releasing with `a`:
    /// `Σ_{s,u} q(z|a,s,u) β(s,u)`.
    pub fn evidence(&self, model: &ObservationModel, a: usize, z: usize) -> f64 {
        let mut total = 0.0;
        for s in 0..self.n_secret {
            for u in 0..self.n_useful {
                total += model.prob(a, s, u, z) * self.get(s, u);
            }
        }
        total
    }

    /// Bayes update after observing `z` under release mechanism `a`.
    pub fn update(&self, model: &ObservationModel, a: usize, z: usize) -> Result<Belief> {
        if a >= model.n_actions() {
            return Err(Error::ActionOutOfRange {
                action: a,
                n_actions: model.n_actions(),
            });
        }
        if z >= model.n_obs() {
            return Err(Error::Config(alloc::format!(
                "observation {z} out of range (n_obs = {})",
                model.n_obs()
            )));
        }
        if model.n_secret() != self.n_secret || model.n_useful() != self.n_useful {
            return Err(Error::LengthMismatch {
                expected: model.spaces().n_cells(),
                got: self.joint.len(),
            });
        }
        let mut joint = Vec::with_capacity(self.joint.len());
        for s in 0..self.n_secret {
            for u in 0..self.n_useful {
                joint.push(model.prob(a, s, u, z) * self.get(s, u));
            }
        }
        let total: f64 = joint.iter().sum();
        if !(total >= MIN_EVIDENCE) {
            return Err(Error::ZeroLikelihood { action: a, obs: z });
        }
        for p in &mut joint {
            *p /= total;
        }
        Ok(Belief {
            n_secret: self.n_secret,
            n_useful: self.n_useful,
            joint,
        })
    }

    /// `β(s) = Σ_u β(s, u)`.
    pub fn marginal_secret(&self) -> Vec<f64> {
        self.joint
            .chunks(self.n_useful)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// `β(u) = Σ_s β(s, u)`.
    pub fn marginal_useful(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_useful];
        for row in self.joint.chunks(self.n_useful) {
            for (acc, p) in m.iter_mut().zip(row) {
                *acc += p;
            }
        }
        m
    }

    /// The provider's most confident secret and that confidence.
    pub fn max_confidence_secret(&self) -> (usize, f64) {
        argmax(&self.marginal_secret())
    }

    /// The useful hypothesis the provider would declare, and its posterior.
    pub fn max_confidence_useful(&self) -> (usize, f64) {
        argmax(&self.marginal_useful())
    }
}

/// Index and value of the maximum; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(dist: &[f64]) -> f64 {
    let h: f64 = dist
        .iter()
        .filter(|p| **p > 0.0)
        .map(|&p| -p * libm::log(p))
        .sum();
    h.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HypothesisSpace;

    fn model_2x2(probs: Vec<f64>) -> ObservationModel {
        ObservationModel::new(HypothesisSpace::new(2, 2).unwrap(), 1, 2, probs).unwrap()
    }

    #[test]
    fn uninformative_observation_keeps_belief() {
        let m = model_2x2(vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7]);
        let b = Belief::from_weights(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let post = b.update(&m, 0, 1).unwrap();
        for (x, y) in post.joint().iter().zip(b.joint()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn fully_informative_observation_gives_point_mass() {
        let m = model_2x2(vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let post = Belief::uniform(2, 2).update(&m, 0, 0).unwrap();
        assert_eq!(post.joint(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn hand_computed_posterior() {
        // q(z=0|s,u) = 0.9, 0.6, 0.2, 0.5 ; uniform prior
        // products 0.225, 0.15, 0.05, 0.125 ; total 0.55
        let m = model_2x2(vec![0.9, 0.1, 0.6, 0.4, 0.2, 0.8, 0.5, 0.5]);
        let post = Belief::uniform(2, 2).update(&m, 0, 0).unwrap();
        let expected = [0.225 / 0.55, 0.15 / 0.55, 0.05 / 0.55, 0.125 / 0.55];
        for (x, y) in post.joint().iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let m = model_2x2(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            Belief::uniform(2, 2).update(&m, 0, 1),
            Err(Error::ZeroLikelihood { action: 0, obs: 1 })
        ));
        assert!(Belief::uniform(2, 2).update(&m, 3, 0).is_err());
    }

    #[test]
    fn marginals_and_confidence() {
        let b = Belief::from_weights(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (ms, mu) = (b.marginal_secret(), b.marginal_useful());
        assert!((ms[0] - 0.3).abs() < 1e-15 && (ms[1] - 0.7).abs() < 1e-15);
        assert!((mu[0] - 0.4).abs() < 1e-15 && (mu[1] - 0.6).abs() < 1e-15);
        let (s, v) = b.max_confidence_secret();
        assert_eq!(s, 1);
        assert!((v - 0.7).abs() < 1e-15);

        let u = Belief::uniform(3, 3);
        assert_eq!(u.max_confidence_secret().0, 0);
        assert!((u.max_confidence_secret().1 - 1.0 / 3.0).abs() < 1e-15);

        let p = Belief::from_weights(3, 2, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.max_confidence_secret(), (2, 1.0));
        assert_eq!(p.max_confidence_useful(), (1, 1.0));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.25; 4]) - libm::log(4.0)).abs() < 1e-15);
        // -(0.25 ln 0.25 + 0.75 ln 0.75)
        assert!((entropy(&[0.25, 0.75]) - 0.562_335_144_618_808_5).abs() < 1e-15);
    }
}
