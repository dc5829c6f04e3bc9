//! The policy interface shared by learned, oracle and baseline policies.
//!
//! A policy maps what the user can see (the provider's belief, the leakage
//! spent so far and the step index) to a distribution over the release
//! mechanisms followed by the stop action, i.e. a vector of length
//! `n_actions + 1` whose last entry is STOP.

use alloc::vec;
use alloc::vec::Vec;

use crate::belief::Belief;
use crate::env::Action;

/// Policy-visible part of an environment state.
#[derive(Debug, Clone, Copy)]
pub struct PolicyView<'a> {
    pub belief: &'a Belief,
    pub cumulative_mi: f64,
    pub step: usize,
}

pub trait Policy {
    fn n_actions(&self) -> usize;

    /// Distribution over `0..n_actions` followed by STOP.
    fn action_dist(&self, view: &PolicyView<'_>) -> Vec<f64>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn action_dist(&self, view: &PolicyView<'_>) -> Vec<f64> {
        (**self).action_dist(view)
    }
}

/// Converts an index into a full action distribution into an [`Action`].
pub fn action_from_index(index: usize, n_actions: usize) -> Action {
    if index >= n_actions {
        Action::Stop
    } else {
        Action::Release(index)
    }
}

pub fn sample_action<R: rand::Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Action {
    action_from_index(crate::seed::sample_index(dist, rng), dist.len() - 1)
}

/// Renormalizes a full action distribution over release mechanisms only.
///
/// When the policy puts no mass on releasing, the executed action (if any)
/// is taken as a point mass.
pub fn release_distribution(dist: &[f64], executed: Option<usize>) -> Vec<f64> {
    let n = dist.len() - 1;
    let mass: f64 = dist[..n].iter().sum();
    if mass > 0.0 {
        dist[..n].iter().map(|p| p / mass).collect()
    } else {
        let mut d = vec![0.0; n];
        if let Some(a) = executed {
            d[a] = 1.0;
        } else if n > 0 {
            d.iter_mut().for_each(|p| *p = 1.0 / n as f64);
        }
        d
    }
}

/// The baseline that picks uniformly among all release mechanisms and STOP.
#[derive(Debug, Clone, Copy)]
pub struct UniformRandom {
    pub n_actions: usize,
}

impl Policy for UniformRandom {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_dist(&self, _view: &PolicyView<'_>) -> Vec<f64> {
        vec![1.0 / (self.n_actions + 1) as f64; self.n_actions + 1]
    }
}

/// Declares immediately.
#[derive(Debug, Clone, Copy)]
pub struct AlwaysStop {
    pub n_actions: usize,
}

impl Policy for AlwaysStop {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_dist(&self, _view: &PolicyView<'_>) -> Vec<f64> {
        let mut d = vec![0.0; self.n_actions + 1];
        d[self.n_actions] = 1.0;
        d
    }
}

/// A stationary distribution that ignores the state.
#[derive(Debug, Clone)]
pub struct FixedDist {
    dist: Vec<f64>,
}

impl FixedDist {
    /// `dist` has length `n_actions + 1` (STOP last).
    pub fn new(dist: Vec<f64>) -> Self {
        FixedDist { dist }
    }
}

impl Policy for FixedDist {
    fn n_actions(&self) -> usize {
        self.dist.len() - 1
    }

    fn action_dist(&self, _view: &PolicyView<'_>) -> Vec<f64> {
        self.dist.clone()
    }
}
