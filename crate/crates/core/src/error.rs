use alloc::boxed::Box;
use alloc::string::String;

use crate::a2c::TrainingLog;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("ingestion error at row {row}: {msg}")]
    Ingest { row: usize, msg: String },

    #[error("observation {obs} has zero likelihood under action {action} and the current belief")]
    ZeroLikelihood { action: usize, obs: usize },

    #[error("episode already finished")]
    EpisodeDone,

    #[error("action {action} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },

    #[error("enumeration needs {needed} leaves, limit is {limit}")]
    TooLarge { needed: u128, limit: u128 },

    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("training diverged at checkpoint {}: mean cost {:.3} exceeds limit {:.3}", .0.checkpoint, .0.mean_cost, .0.limit)]
    Diverged(Box<Divergence>),
}

/// Diagnostics captured when the actor-critic trainer aborts.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub checkpoint: usize,
    pub mean_cost: f64,
    pub limit: f64,
    pub baseline_cost: f64,
    pub log: TrainingLog,
}
