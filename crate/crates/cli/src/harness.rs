//! Experiment plumbing shared by the subcommands: building the problem from
//! a config, parallel threshold sweeps, episode traces, the dp solve and the
//! leakage oracle report.

use std::path::Path;

use aput_core::a2c::EvalMetrics;
use aput_core::dp::{
    value_iteration, verify_value_certificate, BeliefGrid, CertificateReport, ValueTable,
};
use aput_core::env::{Action, Env, Phase};
use aput_core::instances::desk_model;
use aput_core::mi::{
    enumerate_trajectory_mi, instantaneous_mi, train_qnet, variational_estimate, QNet,
};
use aput_core::model::{build_synthetic, fit_from_records};
use aput_core::policy::{release_distribution, sample_action, Policy, PolicyView, UniformRandom};
use aput_core::sweep::{run_threshold, PutCurve, SweepFailure, SweepSettings};
use aput_core::{seed, Belief, ObservationModel, Prior};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelSource};
use crate::error::{CliError, CliResult};
use crate::formats::{read_labeled_csv, read_model};

/// Model, prior and (for CSV fits) the per-action bin cuts.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ObservationModel,
    pub prior: Prior,
    pub cuts: Option<Vec<Vec<f64>>>,
}

/// Builds the observation model named by the config. `model_path`, when
/// given, replaces the configured source with a model JSON file.
pub fn load_model(
    cfg: &ExperimentConfig,
    model_path: Option<&Path>,
) -> CliResult<(ObservationModel, Option<Vec<Vec<f64>>>)> {
    if let Some(p) = model_path {
        return Ok((read_model(p)?, None));
    }
    match cfg.model {
        ModelSource::Synthetic => {
            let m = build_synthetic(
                cfg.model_seed.unwrap_or(cfg.seed),
                cfg.n_actions,
                cfg.n_secret,
                cfg.n_useful,
                cfg.n_obs,
                cfg.sigma_lo,
                cfg.sigma_hi,
            )?;
            Ok((m, None))
        }
        ModelSource::File => Ok((
            read_model(cfg.model_path.as_deref().expect("validated"))?,
            None,
        )),
        ModelSource::Csv => fit_csv(cfg, cfg.model_path.as_deref().expect("validated")),
        ModelSource::Desk => Ok((desk_model(), None)),
    }
}

/// Fits a model from a labeled-readings CSV; errors carry file line numbers.
pub fn fit_csv(
    cfg: &ExperimentConfig,
    path: &Path,
) -> CliResult<(ObservationModel, Option<Vec<Vec<f64>>>)> {
    let ing = read_labeled_csv(
        path,
        cfg.action_labels.as_deref(),
        cfg.secret_labels.as_deref(),
        cfg.useful_labels.as_deref(),
    )?;
    let n_actions = ing.action_labels.len();
    match fit_from_records(
        &ing.records,
        ing.spaces.clone(),
        n_actions,
        cfg.n_obs,
        cfg.smoothing,
    ) {
        Ok(f) => Ok((f.model, Some(f.cuts))),
        Err(aput_core::Error::Ingest { row, msg }) if row > 0 => Err(CliError::Config(format!(
            "{} line {}: {msg}",
            path.display(),
            ing.lines[row - 1]
        ))),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}

pub fn load_problem(cfg: &ExperimentConfig, model_path: Option<&Path>) -> CliResult<Problem> {
    let (model, cuts) = load_model(cfg, model_path)?;
    let prior = match &cfg.prior {
        None => Prior::uniform(model.spaces()),
        Some(rows) => {
            let (n, m) = (rows.len(), rows[0].len());
            if (n, m) != (model.n_secret(), model.n_useful()) {
                return Err(CliError::Config(format!(
                    "config key `prior`: shape {n}x{m} does not match the model's {}x{}",
                    model.n_secret(),
                    model.n_useful()
                )));
            }
            Prior::new(n, m, rows.concat())
                .map_err(|e| CliError::Config(format!("config key `prior`: {e}")))?
        }
    };
    Ok(Problem { model, prior, cuts })
}

/// Runs every grid point on the rayon pool and assembles rows by grid
/// index. On failure the finished points are returned as partial results.
pub fn run_sweep(problem: &Problem, settings: &SweepSettings) -> Result<PutCurve, SweepFailure> {
    settings.validate().map_err(|error| SweepFailure {
        partial: PutCurve::default(),
        failed_threshold: f64::NAN,
        error,
    })?;
    let results: Vec<_> = (0..settings.thresholds.len())
        .into_par_iter()
        .map(|i| run_threshold(&problem.model, &problem.prior, settings, i))
        .collect();
    let mut done = Vec::new();
    let mut failure = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(x) => done.push(x),
            Err(e) if failure.is_none() => failure = Some((settings.thresholds[i], e)),
            Err(_) => {}
        }
    }
    let curve = PutCurve::from_results(done);
    match failure {
        None => Ok(curve),
        Some((failed_threshold, error)) => Err(SweepFailure {
            partial: curve,
            failed_threshold,
            error,
        }),
    }
}

const STREAM_TRACE: u64 = 0x7ACE;

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Active => "active",
        Phase::Forbidden => "forbidden",
        Phase::Terminal => "terminal",
    }
}

/// Step-level trace rows for `episodes` rollouts, in the trace CSV layout.
pub fn trace_rows<P: Policy + ?Sized>(
    policy: &P,
    env: &Env<'_>,
    episodes: usize,
    master: u64,
) -> CliResult<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for ep in 0..episodes {
        let mut state = env.reset(seed::derive(master, STREAM_TRACE, 2 * ep as u64));
        let mut rng = seed::rng(seed::derive(master, STREAM_TRACE, 2 * ep as u64 + 1));
        while !state.is_done() {
            let dist = policy.action_dist(&state.view());
            let action = sample_action(&dist, &mut rng);
            let out = env.step(&mut state, action, &dist)?;
            rows.push(vec![
                ep.to_string(),
                state.step.to_string(),
                match action {
                    Action::Release(a) => a.to_string(),
                    Action::Stop => "stop".into(),
                },
                out.observation.map(|z| z.to_string()).unwrap_or_default(),
                format!("{}", out.cost),
                format!("{}", state.belief.max_confidence_secret().1),
                format!("{}", state.belief.max_confidence_useful().1),
                format!("{}", state.cumulative_mi),
                phase_name(state.phase).into(),
            ]);
        }
    }
    Ok(rows)
}

/// Converged dp table for one threshold and its certificate.
pub fn solve_dp(
    problem: &Problem,
    cfg: &ExperimentConfig,
    threshold: f64,
) -> CliResult<(ValueTable, CertificateReport)> {
    let grid = BeliefGrid::new(
        problem.model.n_secret(),
        problem.model.n_useful(),
        cfg.dp_resolution,
    )?;
    let costs = cfg.costs();
    let privacy = cfg.privacy_spec(threshold);
    let table = value_iteration(
        &problem.model,
        &grid,
        &costs,
        &privacy,
        cfg.dp_tol,
        cfg.dp_max_iter,
    )?;
    let cert = verify_value_certificate(&table, &problem.model, &costs, &privacy)?;
    Ok((table, cert))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRule {
    pub horizon: usize,
    pub joint: f64,
    pub accumulated: f64,
}

/// Exact and variational leakage at the prior under the uniform-random
/// release policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub qnet_loss: f64,
    /// Absent when full enumeration is too large.
    pub chain_rule: Option<ChainRule>,
}

pub fn mi_oracle(problem: &Problem, cfg: &ExperimentConfig) -> CliResult<(QNet, MiReport)> {
    let policy = UniformRandom {
        n_actions: problem.model.n_actions(),
    };
    let belief = Belief::from_prior(&problem.prior);
    let view = PolicyView {
        belief: &belief,
        cumulative_mi: 0.0,
        step: 0,
    };
    let release = release_distribution(&policy.action_dist(&view), None);
    let exact = instantaneous_mi(&belief, &release, &problem.model);
    let (qnet, qnet_loss) = train_qnet(
        &problem.model,
        &problem.prior,
        &policy,
        cfg.qnet_samples,
        &cfg.qnet(),
        seed::derive(cfg.seed, 0x0A, 0),
    )?;
    let est = variational_estimate(
        &qnet,
        &belief,
        &release,
        &problem.model,
        cfg.mi_k,
        cfg.mi_n,
        seed::derive(cfg.seed, 0x0A, 1),
    )?;
    let chain_rule =
        match enumerate_trajectory_mi(&problem.model, &problem.prior, &policy, cfg.mi_horizon) {
            Ok(t) => Some(ChainRule {
                horizon: cfg.mi_horizon,
                joint: t.joint,
                accumulated: t.accumulated,
            }),
            Err(aput_core::Error::TooLarge { .. }) => None,
            Err(e) => return Err(e.into()),
        };
    Ok((
        qnet,
        MiReport {
            exact,
            estimate: est.estimate,
            std_error: est.std_error,
            qnet_loss,
            chain_rule,
        },
    ))
}

/// One-line human summary of evaluation metrics.
pub fn summary(m: &EvalMetrics) -> String {
    format!(
        "episodes={} mean_cost={:.4} (se {:.4}) mean_tau={:.3} conf_u={:.3} acc_u={:.3} acc_s={:.3} violation_rate={:.4} mean_mi={:.4}",
        m.episodes,
        m.mean_cost,
        m.se_cost(),
        m.mean_tau,
        m.mean_conf_u,
        m.acc_u,
        m.acc_s,
        m.violation_rate,
        m.mean_mi
    )
}
