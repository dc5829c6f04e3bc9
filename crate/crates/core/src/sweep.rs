//! Privacy-threshold sweeps producing privacy-utility trade-off curves.
//!
//! For every threshold a fresh actor-critic policy is trained (seed
//! `master_seed ^ index`) and evaluated next to the uniform-random baseline
//! on the same evaluation seeds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::a2c::{evaluate, train, A2CConfig, EvalMetrics, TrainingLog};
use crate::env::{CostParams, Env, PrivacySpec};
use crate::model::{ObservationModel, Prior};
use crate::policy::UniformRandom;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyKind {
    Belief,
    Mi,
}

impl PrivacyKind {
    pub fn spec(&self, threshold: f64) -> PrivacySpec {
        match self {
            PrivacyKind::Belief => PrivacySpec::BeliefThreshold { l_b: threshold },
            PrivacyKind::Mi => PrivacySpec::MiBudget { l_mi: threshold },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PrivacyKind::Belief => "L_B",
            PrivacyKind::Mi => "L_MI",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub costs: CostParams,
    pub kind: PrivacyKind,
    pub thresholds: Vec<f64>,
    pub a2c: A2CConfig,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("threshold grid is empty".into()));
        }
        if self.thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "threshold grid {:?} is not strictly increasing",
                self.thresholds
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        self.costs.validate()?;
        self.a2c.validate()
    }

    /// Seed used for grid point `index`.
    pub fn point_seed(&self, index: usize) -> u64 {
        self.seed ^ index as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    A2c,
    Random,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::A2c => "a2c",
            PolicyKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PutRow {
    pub threshold: f64,
    pub policy: PolicyKind,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub index: usize,
    pub threshold: f64,
    pub trained: EvalMetrics,
    pub baseline: EvalMetrics,
    pub log: TrainingLog,
}

/// Trains and evaluates grid point `index`.
pub fn run_threshold(
    model: &ObservationModel,
    prior: &Prior,
    settings: &SweepSettings,
    index: usize,
) -> Result<ThresholdResult> {
    let threshold = settings.thresholds[index];
    let env = Env::new(model, prior, settings.costs, settings.kind.spec(threshold))?;
    let point_seed = settings.point_seed(index);
    let cfg = A2CConfig {
        seed: point_seed,
        gamma: settings.costs.gamma,
        ..settings.a2c.clone()
    };
    let (policy, log) = train(&env, &cfg)?;
    let eval_seed = seed::derive(point_seed, 0x5EED, 0);
    let trained = evaluate(&policy, &env, settings.eval_episodes, eval_seed)?;
    let baseline = evaluate(
        &UniformRandom {
            n_actions: model.n_actions(),
        },
        &env,
        settings.eval_episodes,
        eval_seed,
    )?;
    Ok(ThresholdResult {
        index,
        threshold,
        trained,
        baseline,
        log,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PutCurve {
    pub rows: Vec<PutRow>,
    pub logs: Vec<(f64, TrainingLog)>,
}

impl PutCurve {
    /// Assembles rows in grid order regardless of completion order.
    pub fn from_results(mut results: Vec<ThresholdResult>) -> Self {
        results.sort_by_key(|r| r.index);
        let mut curve = PutCurve::default();
        for r in results {
            curve.rows.push(PutRow {
                threshold: r.threshold,
                policy: PolicyKind::A2c,
                metrics: r.trained,
            });
            curve.rows.push(PutRow {
                threshold: r.threshold,
                policy: PolicyKind::Random,
                metrics: r.baseline,
            });
            curve.logs.push((r.threshold, r.log));
        }
        curve
    }

    pub fn rows_for(&self, policy: PolicyKind) -> impl Iterator<Item = &PutRow> {
        self.rows.iter().filter(move |r| r.policy == policy)
    }

    /// Threshold whose trained policy has the largest `acc_u - acc_s`, with
    /// the trained and baseline rows there.
    pub fn best_gap(&self) -> Option<(&PutRow, &PutRow)> {
        let best = self
            .rows_for(PolicyKind::A2c)
            .fold(None::<&PutRow>, |acc, r| match acc {
                Some(b) if b.metrics.gap() >= r.metrics.gap() => Some(b),
                _ => Some(r),
            })?;
        let base = self
            .rows_for(PolicyKind::Random)
            .find(|r| r.threshold == best.threshold)?;
        Some((best, base))
    }
}

/// Failure part-way through a sweep; `partial` holds finished grid points.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub partial: PutCurve,
    pub failed_threshold: f64,
    pub error: Error,
}

impl SweepFailure {
    pub fn message(&self) -> String {
        format!("threshold {}: {}", self.failed_threshold, self.error)
    }
}

/// Sequential sweep over the whole grid.
pub fn run_put_sweep(
    model: &ObservationModel,
    prior: &Prior,
    settings: &SweepSettings,
) -> core::result::Result<PutCurve, SweepFailure> {
    settings.validate().map_err(|error| SweepFailure {
        partial: PutCurve::default(),
        failed_threshold: f64::NAN,
        error,
    })?;
    let mut done = Vec::new();
    for i in 0..settings.thresholds.len() {
        match run_threshold(model, prior, settings, i) {
            Ok(r) => done.push(r),
            Err(error) => {
                return Err(SweepFailure {
                    partial: PutCurve::from_results(done),
                    failed_threshold: settings.thresholds[i],
                    error,
                })
            }
        }
    }
    Ok(PutCurve::from_results(done))
}
