//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use aput_core::a2c::{evaluate, train, A2CPolicy};
use aput_core::dp::{greedy_policy, ValueTable};
use aput_core::env::Env;
use aput_core::mi::QNet;
use aput_core::model::{build_synthetic, check_identifiability};
use aput_core::policy::{Policy, UniformRandom};
use aput_core::{seed, Belief, Error};
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{
    read_json, write_csv, write_json, write_put_curve, write_sweep_logs, write_training_log,
    Metadata, TRACE_HEADER,
};
use crate::harness::{
    fit_csv, load_problem, mi_oracle, run_sweep, solve_dp, summary, trace_rows, Problem,
};
use crate::svg::put_curve_svg;

#[derive(Debug, Parser)]
#[command(
    name = "aput",
    version,
    about = "Active privacy-utility trade-off experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat JSON config file; every key is optional.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config and the APUT_SEED variable.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic observation model and write it as JSON.
    GenModel {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model from a labeled CSV (`action,reading,secret,useful`).
    FitModel {
        /// CSV file; defaults to `model_path` from the config.
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Validate a model and print its identifiability report.
    CheckModel {
        /// Model JSON; defaults to the configured model source.
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the discretized-belief dp and check its certificate.
    SolveDp {
        /// Model JSON overriding the configured source.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Privacy threshold; defaults to the first grid value.
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Train an actor-critic policy at one threshold.
    Train {
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a policy checkpoint, a dp table or the random baseline.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Actor-critic checkpoint written by `train`.
        #[arg(long, value_name = "FILE", conflicts_with_all = ["value_table", "random"])]
        policy: Option<PathBuf>,
        /// Value table written by `solve-dp`; acts greedily.
        #[arg(long, value_name = "FILE", conflicts_with = "random")]
        value_table: Option<PathBuf>,
        /// Uniform-random baseline.
        #[arg(long)]
        random: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate over the threshold grid; write curve files.
    PutSweep {
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare exact and variational leakage at the prior.
    MiOracle {
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenModel { common }
            | Command::FitModel { common, .. }
            | Command::CheckModel { common, .. }
            | Command::SolveDp { common, .. }
            | Command::Train { common, .. }
            | Command::Evaluate { common, .. }
            | Command::PutSweep { common, .. }
            | Command::MiOracle { common, .. } => common,
        }
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn out_path(cfg: &ExperimentConfig, common: &Common, default: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(default))
}

fn threshold_or_first(cfg: &ExperimentConfig, t: Option<f64>) -> f64 {
    t.unwrap_or(cfg.thresholds[0])
}

fn meta(cfg: &ExperimentConfig) -> Metadata {
    Metadata {
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    let common = command.common().clone();
    let cfg = ExperimentConfig::load(common.config.as_deref(), common.seed)?;
    match command {
        Command::GenModel { .. } => {
            let model = build_synthetic(
                cfg.model_seed.unwrap_or(cfg.seed),
                cfg.n_actions,
                cfg.n_secret,
                cfg.n_useful,
                cfg.n_obs,
                cfg.sigma_lo,
                cfg.sigma_hi,
            )?;
            let out = common.out.clone().unwrap_or_else(|| "model.json".into());
            write_json(&out, &model)?;
            println!("wrote {}", out.display());
        }
        Command::FitModel { csv, .. } => {
            let path = csv
                .or_else(|| cfg.model_path.clone())
                .ok_or_else(|| CliError::Config("fit-model needs a CSV path".into()))?;
            let (model, cuts) = fit_csv(&cfg, &path)?;
            let out = common.out.clone().unwrap_or_else(|| "model.json".into());
            write_json(&out, &model)?;
            let cuts = serde_json::to_string(&cuts).expect("cuts serialize");
            println!("wrote {}", out.display());
            println!("cuts {cuts}");
        }
        Command::CheckModel { model, .. } => {
            let problem = load_problem(&cfg, model.as_deref())?;
            check_model(&problem, common.out.as_deref())?;
        }
        Command::SolveDp {
            model, threshold, ..
        } => {
            let problem = load_problem(&cfg, model.as_deref())?;
            let t = threshold_or_first(&cfg, threshold);
            let (table, cert) = solve_dp(&problem, &cfg, t)?;
            let out = out_path(&cfg, &common, "value_table.json");
            write_json(&out, &table)?;
            let grid = table.grid()?;
            let (p, _) = grid.project(&Belief::from_prior(&problem.prior));
            println!(
                "iterations={} residual={:e} value_at_prior={} action_at_prior={:?}",
                table.iterations,
                table.residual,
                table.value(p, table.levels - 1),
                table.action(p, table.levels - 1)
            );
            println!(
                "certificate max_violation={:e} projection_slack={:e} lipschitz={} holds={}",
                cert.max_violation,
                cert.projection_slack,
                cert.lipschitz_estimate,
                cert.holds(cfg.dp_tol)
            );
            println!("wrote {}", out.display());
        }
        Command::Train {
            model, threshold, ..
        } => {
            let problem = load_problem(&cfg, model.as_deref())?;
            let t = threshold_or_first(&cfg, threshold);
            train_cmd(&problem, &cfg, t, &out_path(&cfg, &common, "aput-out"))?;
        }
        Command::Evaluate {
            model,
            threshold,
            policy,
            value_table,
            random,
            ..
        } => {
            let problem = load_problem(&cfg, model.as_deref())?;
            let t = threshold_or_first(&cfg, threshold);
            let out = out_path(&cfg, &common, "aput-out");
            if let Some(p) = policy {
                let pol: A2CPolicy = read_json(&p)?;
                pol.validate()?;
                evaluate_cmd(&problem, &cfg, t, &pol, &out)?;
            } else if let Some(v) = value_table {
                let table: ValueTable = read_json(&v)?;
                let pol = greedy_policy(&table, problem.model.n_actions())?;
                evaluate_cmd(&problem, &cfg, t, &pol, &out)?;
            } else if random {
                let pol = UniformRandom {
                    n_actions: problem.model.n_actions(),
                };
                evaluate_cmd(&problem, &cfg, t, &pol, &out)?;
            } else {
                return Err(CliError::Config(
                    "evaluate needs one of --policy, --value-table or --random".into(),
                ));
            }
        }
        Command::PutSweep { model, .. } => {
            let problem = load_problem(&cfg, model.as_deref())?;
            sweep_cmd(&problem, &cfg, &out_path(&cfg, &common, "aput-out"))?;
        }
        Command::MiOracle { model, .. } => {
            let problem = load_problem(&cfg, model.as_deref())?;
            let out = out_path(&cfg, &common, "aput-out");
            let (qnet, report): (QNet, _) = mi_oracle(&problem, &cfg)?;
            write_json(&out.join("qnet.json"), &qnet)?;
            write_json(&out.join("mi_report.json"), &report)?;
            println!(
                "exact={} estimate={} se={} gap={}",
                report.exact,
                report.estimate,
                report.std_error,
                report.estimate - report.exact
            );
            if let Some(c) = &report.chain_rule {
                println!(
                    "chain rule T={}: joint={} accumulated={}",
                    c.horizon, c.joint, c.accumulated
                );
            }
        }
    }
    Ok(())
}

fn check_model(problem: &Problem, out: Option<&Path>) -> CliResult<()> {
    let m = &problem.model;
    let report = check_identifiability(m);
    println!(
        "model: {} secrets x {} useful, {} mechanisms, {} observations",
        m.n_secret(),
        m.n_useful(),
        m.n_actions(),
        m.n_obs()
    );
    for w in &report.witnesses {
        match w.action {
            Some(a) => println!("pair ({}, {}): separated by mechanism {a}", w.u, w.u_prime),
            None => println!("pair ({}, {}): NOT separated", w.u, w.u_prime),
        }
    }
    println!("identifiable: {}", report.ok);
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn train_cmd(problem: &Problem, cfg: &ExperimentConfig, t: f64, out: &Path) -> CliResult<()> {
    let env = Env::new(
        &problem.model,
        &problem.prior,
        cfg.costs(),
        cfg.privacy_spec(t),
    )?;
    let meta = meta(cfg);
    match train(&env, &cfg.a2c(cfg.seed)) {
        Ok((policy, log)) => {
            write_json(&out.join("policy.json"), &policy)?;
            write_training_log(&out.join("training_log.csv"), &log, &meta)?;
            if let Some(last) = log.records.last() {
                println!(
                    "checkpoint={} mean_cost={} mean_tau={} violation_rate={}",
                    last.checkpoint, last.mean_cost, last.mean_tau, last.violation_rate
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Err(Error::Diverged(d)) => {
            write_training_log(&out.join("training_log.csv"), &d.log, &meta)?;
            Err(CliError::Numeric(Error::Diverged(d).to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn evaluate_cmd<P: Policy + ?Sized>(
    problem: &Problem,
    cfg: &ExperimentConfig,
    t: f64,
    policy: &P,
    out: &Path,
) -> CliResult<()> {
    let env = Env::new(
        &problem.model,
        &problem.prior,
        cfg.costs(),
        cfg.privacy_spec(t),
    )?;
    if policy.n_actions() != env.n_actions() {
        return Err(CliError::Config(format!(
            "policy has {} mechanisms, model has {}",
            policy.n_actions(),
            env.n_actions()
        )));
    }
    let metrics = evaluate(
        policy,
        &env,
        cfg.eval_episodes,
        seed::derive(cfg.seed, 0xE4, 0),
    )?;
    write_json(&out.join("metrics.json"), &metrics)?;
    let rows = trace_rows(policy, &env, cfg.trace_episodes, cfg.seed)?;
    write_csv(&out.join("trace.csv"), &TRACE_HEADER, &rows, &meta(cfg))?;
    println!("{}", summary(&metrics));
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep_cmd(problem: &Problem, cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let meta = meta(cfg);
    let settings = cfg.sweep();
    let write = |curve: &_| -> CliResult<()> {
        write_put_curve(out, curve, cfg.privacy, &meta)?;
        write_sweep_logs(&out.join("training_log.csv"), curve, &meta)?;
        let svg = put_curve_svg(curve, cfg.privacy);
        let path = out.join("put_curve.svg");
        std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))
    };
    match run_sweep(problem, &settings) {
        Ok(curve) => {
            write(&curve)?;
            for r in &curve.rows {
                println!(
                    "{} {} {}",
                    r.threshold,
                    r.policy.name(),
                    summary(&r.metrics)
                );
            }
            if let Some((best, base)) = curve.best_gap() {
                println!(
                    "best threshold {}: gap a2c={:.4} random={:.4}",
                    best.threshold,
                    best.metrics.gap(),
                    base.metrics.gap()
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Err(f) if f.failed_threshold.is_nan() => Err(f.error.into()),
        Err(f) => {
            write(&f.partial)?;
            eprintln!(
                "partial results for {} of {} thresholds written to {}",
                f.partial.logs.len(),
                settings.thresholds.len(),
                out.display()
            );
            Err(CliError::Numeric(f.message()))
        }
    }
}
