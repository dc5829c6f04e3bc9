//! Core algorithms for active privacy-utility trade-off in sequential data
//! release.
//!
//! A user holds two static latent hypotheses: a *useful* one `u` that should be
//! revealed to a service provider as quickly as possible, and a *secret* one
//! `s` that must stay protected. At each step the user picks one data-release
//! mechanism; the provider observes the released sample and updates a joint
//! posterior over `(s, u)`. Privacy is enforced either as a ceiling on the
//! provider's confidence in the secret or as a budget on the cumulative mutual
//! information leaked about it.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and
//! experiment output live in the companion `aput` crate.
//!
//! Module map:
//! - [`model`]: hypothesis spaces, observation models, priors, synthetic and
//!   empirical model construction, identifiability.
//! - [`belief`]: exact Bayesian filtering over the joint hypothesis grid.
//! - [`env`]: the episodic POMDP with both privacy cost structures.
//! - [`mi`]: exact per-step leakage, trajectory-level oracle and the
//!   variational estimator.
//! - [`nn`]: small dense networks with hand-written reverse-mode gradients.
//! - [`dp`]: discretized-belief value iteration used as a ground-truth oracle.
//! - [`a2c`]: advantage actor-critic training and policy evaluation.
//! - [`instances`]: small reference problems.
//! - [`sweep`]: privacy-threshold sweeps producing trade-off curves.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod a2c;
pub mod belief;
pub mod dp;
pub mod env;
mod error;
pub mod instances;
pub mod mi;
pub mod model;
pub mod nn;
pub mod policy;
pub mod seed;
pub mod sweep;

pub use error::{Error, Result};

pub use belief::Belief;
pub use env::{Action, CostParams, Env, EnvState, ForbiddenMode, Phase, PrivacySpec, StepOutcome};
pub use model::{HypothesisSpace, ObservationModel, Prior};
pub use policy::{Policy, PolicyView};
