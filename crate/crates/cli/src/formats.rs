//! File formats: JSON models and checkpoints, labeled-reading CSV input and
//! the CSV reports.
//!
//! Every CSV written here has a header row and ends with one comment line
//! `# config_sha256=<hex> seed=<u64>`.

use std::collections::BTreeSet;
use std::path::Path;

use aput_core::a2c::{EvalMetrics, TrainingLog};
use aput_core::model::LabeledReading;
use aput_core::sweep::{PolicyKind, PrivacyKind, PutCurve};
use aput_core::{HypothesisSpace, ObservationModel};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Shortest decimal that round-trips, so JSON reloads are bit-exact.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    create_parent(path)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Config(format!(
            "{} at `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

pub fn read_model(path: &Path) -> CliResult<ObservationModel> {
    read_json(path)
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Provenance stamped at the end of every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
}

impl Metadata {
    pub fn line(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.config_hash, self.seed)
    }
}

/// Serializes rows with a header, then appends the metadata line.
pub fn csv_bytes(header: &[String], rows: &[Vec<String>], meta: &Metadata) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    let mut bytes = w.into_inner().expect("in-memory flush");
    bytes.extend_from_slice(meta.line().as_bytes());
    bytes
}

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<String>],
    meta: &Metadata,
) -> CliResult<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    create_parent(path)?;
    std::fs::write(path, csv_bytes(&header, rows, meta)).map_err(|e| CliError::io(path, e))
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub const TRAINING_LOG_HEADER: [&str; 8] = [
    "checkpoint",
    "mean_cost",
    "mean_tau",
    "mean_conf_u",
    "acc_u",
    "acc_s",
    "violation_rate",
    "mean_mi",
];

fn log_rows(log: &TrainingLog) -> impl Iterator<Item = Vec<String>> + '_ {
    log.records.iter().map(|r| {
        vec![
            r.checkpoint.to_string(),
            num(r.mean_cost),
            num(r.mean_tau),
            num(r.mean_conf_u),
            num(r.acc_u),
            num(r.acc_s),
            num(r.violation_rate),
            num(r.mean_mi),
        ]
    })
}

pub fn write_training_log(path: &Path, log: &TrainingLog, meta: &Metadata) -> CliResult<()> {
    let rows: Vec<_> = log_rows(log).collect();
    write_csv(path, &TRAINING_LOG_HEADER, &rows, meta)
}

/// Training logs of a sweep stacked, with the threshold as first column.
pub fn write_sweep_logs(path: &Path, curve: &PutCurve, meta: &Metadata) -> CliResult<()> {
    let mut header = vec!["threshold"];
    header.extend_from_slice(&TRAINING_LOG_HEADER);
    let rows: Vec<_> = curve
        .logs
        .iter()
        .flat_map(|(t, log)| {
            log_rows(log).map(move |mut r| {
                r.insert(0, num(*t));
                r
            })
        })
        .collect();
    write_csv(path, &header, &rows, meta)
}

pub const PUT_CURVE_HEADER: [&str; 9] = [
    "threshold",
    "policy",
    "mean_tau",
    "sd_tau",
    "mean_conf_u",
    "acc_u",
    "acc_s",
    "violation_rate",
    "mean_mi",
];

pub fn put_curve_rows(curve: &PutCurve) -> Vec<Vec<String>> {
    curve
        .rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                num(r.threshold),
                r.policy.name().to_string(),
                num(m.mean_tau),
                num(m.sd_tau),
                num(m.mean_conf_u),
                num(m.acc_u),
                num(m.acc_s),
                num(m.violation_rate),
                num(m.mean_mi),
            ]
        })
        .collect()
}

/// Per-class columns follow the class counts, so a 3×3 problem gives
/// `acc_u_0..acc_u_2` and `acc_s_0..acc_s_2`.
pub fn breakdown_header(n_secret: usize, n_useful: usize) -> Vec<String> {
    let mut h: Vec<String> = ["policy", "constraint", "tau", "conf_u", "acc_u"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..n_useful).map(|i| format!("acc_u_{i}")));
    h.push("acc_s".into());
    h.extend((0..n_secret).map(|i| format!("acc_s_{i}")));
    h
}

pub fn breakdown_row(policy: PolicyKind, constraint: &str, m: &EvalMetrics) -> Vec<String> {
    let mut r = vec![
        policy.name().to_string(),
        constraint.to_string(),
        num(m.mean_tau),
        num(m.mean_conf_u),
        num(m.acc_u),
    ];
    r.extend(m.acc_u_per_class.iter().map(|x| num(*x)));
    r.push(num(m.acc_s));
    r.extend(m.acc_s_per_class.iter().map(|x| num(*x)));
    r
}

pub fn constraint_label(kind: PrivacyKind, threshold: f64) -> String {
    format!("{}={threshold}", kind.label())
}

pub fn write_put_curve(
    dir: &Path,
    curve: &PutCurve,
    kind: PrivacyKind,
    meta: &Metadata,
) -> CliResult<()> {
    write_csv(
        &dir.join("put_curve.csv"),
        &PUT_CURVE_HEADER,
        &put_curve_rows(curve),
        meta,
    )?;
    let (n, m) = curve
        .rows
        .first()
        .map(|r| {
            (
                r.metrics.acc_s_per_class.len(),
                r.metrics.acc_u_per_class.len(),
            )
        })
        .unwrap_or((0, 0));
    let rows: Vec<_> = curve
        .rows
        .iter()
        .map(|r| breakdown_row(r.policy, &constraint_label(kind, r.threshold), &r.metrics))
        .collect();
    let header = breakdown_header(n, m);
    let path = dir.join("breakdown.csv");
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    std::fs::write(&path, csv_bytes(&header, &rows, meta)).map_err(|e| CliError::io(&path, e))
}

pub const TRACE_HEADER: [&str; 9] = [
    "episode",
    "step",
    "action",
    "observation",
    "cost",
    "max_conf_secret",
    "max_conf_useful",
    "cumulative_mi",
    "phase",
];

/// Labeled readings with index-mapped labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<LabeledReading>,
    pub spaces: HypothesisSpace,
    pub action_labels: Vec<String>,
    /// File line of each record.
    pub lines: Vec<u64>,
}

/// Orders discovered labels numerically when all are integers, otherwise
/// lexicographically.
fn sorted_labels(set: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = set.into_iter().collect();
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    v
}

fn index_of(labels: &[String], value: &str, column: &str, line: u64) -> CliResult<usize> {
    labels
        .iter()
        .position(|l| l == value)
        .ok_or_else(|| CliError::Config(format!("line {line}: unknown {column} label {value:?}")))
}

/// Reads a CSV with columns `action,reading,secret,useful` (any order).
///
/// Labels are mapped to indices through the given lists, or through the
/// sorted set of labels found in the file when a list is `None`.
pub fn read_labeled_csv(
    path: &Path,
    action_labels: Option<&[String]>,
    secret_labels: Option<&[String]>,
    useful_labels: Option<&[String]>,
) -> CliResult<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: missing column `{name}`", path.display())))
    };
    let (ca, cr, cs, cu) = (
        col("action")?,
        col("reading")?,
        col("secret")?,
        col("useful")?,
    );

    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let reading_text = field(cr);
        let reading: f64 = reading_text.parse().map_err(|_| {
            CliError::Config(format!(
                "line {line}: reading {reading_text:?} is not a number"
            ))
        })?;
        if !reading.is_finite() {
            return Err(CliError::Config(format!(
                "line {line}: reading {reading} is not finite"
            )));
        }
        raw.push((line, field(ca), reading, field(cs), field(cu)));
    }
    if raw.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    let pick = |given: Option<&[String]>,
                f: &dyn Fn(&(u64, String, f64, String, String)) -> String| {
        given
            .map(|g| g.to_vec())
            .unwrap_or_else(|| sorted_labels(raw.iter().map(f).collect()))
    };
    let actions = pick(action_labels, &|r| r.1.clone());
    let secrets = pick(secret_labels, &|r| r.3.clone());
    let usefuls = pick(useful_labels, &|r| r.4.clone());

    let mut records = Vec::with_capacity(raw.len());
    let mut lines = Vec::with_capacity(raw.len());
    for (line, a, reading, s, u) in &raw {
        records.push(LabeledReading {
            action: index_of(&actions, a, "action", *line)?,
            reading: *reading,
            secret: index_of(&secrets, s, "secret", *line)?,
            useful: index_of(&usefuls, u, "useful", *line)?,
        });
        lines.push(*line);
    }
    let spaces = HypothesisSpace::new(secrets.len(), usefuls.len())
        .and_then(|sp| sp.with_labels(Some(secrets), Some(usefuls)))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Ingested {
        records,
        spaces,
        action_labels: actions,
        lines,
    })
}
