//! Flat JSON experiment configuration.
//!
//! Every key is optional; missing keys take the defaults of
//! [`ExperimentConfig::default`]. Unknown keys are rejected. The master seed
//! is resolved as: `--seed` flag, else the `APUT_SEED` environment variable,
//! else the `seed` key.

use std::path::{Path, PathBuf};

use aput_core::a2c::A2CConfig;
use aput_core::env::{CostParams, ForbiddenMode, PrivacySpec};
use aput_core::mi::QNetConfig;
use aput_core::sweep::{PrivacyKind, SweepSettings};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "APUT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// Gaussian-bin synthetic model built from `n_*` and `sigma_*`.
    Synthetic,
    /// Model JSON at `model_path`.
    File,
    /// Labeled readings CSV at `model_path`, fitted with `n_obs` bins.
    Csv,
    /// The built-in 2×2 reference instance.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    pub model: ModelSource,
    pub model_path: Option<PathBuf>,
    /// Seed for the synthetic generator; the master seed when absent.
    pub model_seed: Option<u64>,
    pub n_actions: usize,
    pub n_secret: usize,
    pub n_useful: usize,
    pub n_obs: usize,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub smoothing: f64,
    /// Fixed label lists for CSV ingestion; discovered from the file if absent.
    pub action_labels: Option<Vec<String>>,
    pub secret_labels: Option<Vec<String>>,
    pub useful_labels: Option<Vec<String>>,
    /// Joint prior as `[secret][useful]`; uniform if absent.
    pub prior: Option<Vec<Vec<f64>>>,

    pub lambda: f64,
    pub time_cost: f64,
    pub forbidden_cost: f64,
    pub gamma: f64,
    pub t_max: usize,
    pub scale_stop_cost_by_time_cost: bool,
    pub forbidden_mode: ForbiddenMode,

    pub privacy: PrivacyKind,
    pub thresholds: Vec<f64>,

    pub episodes: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub entropy_coef: f64,
    pub hidden_sizes: Vec<usize>,
    pub eval_every: usize,
    pub checkpoint_episodes: usize,
    pub clip: Option<f64>,
    pub reward_scale: f64,
    pub budget_feature: bool,
    pub divergence_factor: f64,

    pub eval_episodes: usize,
    pub trace_episodes: usize,

    pub dp_resolution: usize,
    pub dp_tol: f64,
    pub dp_max_iter: usize,

    pub qnet_hidden: Vec<usize>,
    pub qnet_lr: f64,
    pub qnet_batch: usize,
    pub qnet_horizon: usize,
    pub qnet_samples: usize,
    pub mi_k: usize,
    pub mi_n: usize,
    pub mi_horizon: usize,

    /// Output location used when `--out` is not given. Not part of the
    /// config hash.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let costs = CostParams::default();
        let a2c = A2CConfig::default();
        let q = QNetConfig::default();
        ExperimentConfig {
            seed: 0,
            model: ModelSource::Synthetic,
            model_path: None,
            model_seed: None,
            n_actions: 3,
            n_secret: 3,
            n_useful: 3,
            n_obs: 50,
            sigma_lo: 0.5,
            sigma_hi: 1.5,
            smoothing: 1.0,
            action_labels: None,
            secret_labels: None,
            useful_labels: None,
            prior: None,
            lambda: costs.lambda,
            time_cost: costs.time_cost,
            forbidden_cost: costs.forbidden_cost,
            gamma: costs.gamma,
            t_max: costs.t_max,
            scale_stop_cost_by_time_cost: costs.scale_stop_cost_by_time_cost,
            forbidden_mode: costs.forbidden_mode,
            privacy: PrivacyKind::Belief,
            thresholds: vec![0.6, 0.7, 0.8, 0.9, 0.99],
            episodes: a2c.episodes,
            lr_actor: a2c.lr_actor,
            lr_critic: a2c.lr_critic,
            entropy_coef: a2c.entropy_coef,
            hidden_sizes: a2c.hidden_sizes,
            eval_every: a2c.eval_every,
            checkpoint_episodes: a2c.eval_episodes,
            clip: a2c.clip,
            reward_scale: a2c.reward_scale,
            budget_feature: a2c.budget_feature,
            divergence_factor: a2c.divergence_factor,
            eval_episodes: 10_000,
            trace_episodes: 20,
            dp_resolution: 12,
            dp_tol: 1e-6,
            dp_max_iter: 20_000,
            qnet_hidden: q.hidden,
            qnet_lr: q.lr,
            qnet_batch: q.batch,
            qnet_horizon: q.horizon,
            qnet_samples: 100_000,
            mi_k: 10_000,
            mi_n: 10_000,
            mi_horizon: 3,
            out_dir: None,
        }
    }
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("config key `{key}`: {msg}"))
}

impl ExperimentConfig {
    /// Parses a config document, naming the offending key on failure.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(format!("config: {}", e.inner()))
            } else {
                key_err(&path, e.inner())
            }
        })
    }

    /// Reads `path` (defaults when `None`), applies the seed overrides and
    /// validates.
    pub fn load(path: Option<&Path>, seed_flag: Option<u64>) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a u64")))?;
        }
        if let Some(s) = seed_flag {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.thresholds.is_empty() {
            return Err(key_err("thresholds", "grid is empty"));
        }
        if self.thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(key_err("thresholds", "grid must be strictly increasing"));
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(key_err(
                "thresholds",
                "thresholds must be positive and finite",
            ));
        }
        if self.privacy == PrivacyKind::Belief && self.thresholds.iter().any(|t| *t > 1.0) {
            return Err(key_err(
                "thresholds",
                "belief thresholds must lie in (0, 1]",
            ));
        }
        if matches!(self.model, ModelSource::File | ModelSource::Csv) && self.model_path.is_none() {
            return Err(key_err("model_path", "required for this model source"));
        }
        if self.eval_episodes == 0 {
            return Err(key_err("eval_episodes", "must be positive"));
        }
        if self.dp_resolution == 0 {
            return Err(key_err("dp_resolution", "must be positive"));
        }
        if !(self.dp_tol > 0.0) {
            return Err(key_err("dp_tol", "must be positive"));
        }
        if self.qnet_samples == 0 || self.mi_k == 0 || self.mi_n == 0 {
            return Err(key_err(
                "qnet_samples",
                "qnet_samples, mi_k and mi_n must be positive",
            ));
        }
        if let Some(p) = &self.prior {
            if p.is_empty() || p.iter().any(|r| r.len() != p[0].len()) {
                return Err(key_err(
                    "prior",
                    "must be a rectangular [secret][useful] array",
                ));
            }
        }
        self.costs()
            .validate()
            .map_err(|e| key_err("lambda/time_cost/forbidden_cost/gamma/t_max", e))?;
        self.a2c(self.seed)
            .validate()
            .map_err(|e| key_err("episodes/lr_actor/lr_critic/...", e))?;
        Ok(())
    }

    pub fn costs(&self) -> CostParams {
        CostParams {
            lambda: self.lambda,
            time_cost: self.time_cost,
            forbidden_cost: self.forbidden_cost,
            gamma: self.gamma,
            t_max: self.t_max,
            scale_stop_cost_by_time_cost: self.scale_stop_cost_by_time_cost,
            forbidden_mode: self.forbidden_mode,
        }
    }

    pub fn a2c(&self, seed: u64) -> A2CConfig {
        A2CConfig {
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            gamma: self.gamma,
            episodes: self.episodes,
            entropy_coef: self.entropy_coef,
            hidden_sizes: self.hidden_sizes.clone(),
            eval_every: self.eval_every,
            eval_episodes: self.checkpoint_episodes,
            seed,
            clip: self.clip,
            reward_scale: self.reward_scale,
            budget_feature: self.budget_feature,
            divergence_factor: self.divergence_factor,
        }
    }

    pub fn qnet(&self) -> QNetConfig {
        QNetConfig {
            hidden: self.qnet_hidden.clone(),
            lr: self.qnet_lr,
            batch: self.qnet_batch,
            horizon: self.qnet_horizon,
            clip: self.clip,
        }
    }

    pub fn sweep(&self) -> SweepSettings {
        SweepSettings {
            costs: self.costs(),
            kind: self.privacy,
            thresholds: self.thresholds.clone(),
            a2c: self.a2c(self.seed),
            eval_episodes: self.eval_episodes,
            seed: self.seed,
        }
    }

    pub fn privacy_spec(&self, threshold: f64) -> PrivacySpec {
        self.privacy.spec(threshold)
    }

    /// SHA-256 of the canonical JSON form, excluding `out_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
