//! Hypothesis spaces, observation models and priors.
//!
//! An [`ObservationModel`] holds one discrete distribution over the
//! observation alphabet for every `(action, secret, useful)` triple. Models
//! can be generated synthetically ([`build_synthetic`]) or estimated from
//! labeled scalar readings ([`fit_from_records`]).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct HypothesisSpace {
    n_secret: usize,
    n_useful: usize,
    secret_labels: Option<Vec<String>>,
    useful_labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    n_secret: usize,
    n_useful: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    secret_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    useful_labels: Option<Vec<String>>,
}

impl TryFrom<SpaceRepr> for HypothesisSpace {
    type Error = Error;

    fn try_from(r: SpaceRepr) -> Result<Self> {
        HypothesisSpace::new(r.n_secret, r.n_useful)?.with_labels(r.secret_labels, r.useful_labels)
    }
}

impl From<HypothesisSpace> for SpaceRepr {
    fn from(h: HypothesisSpace) -> Self {
        SpaceRepr {
            n_secret: h.n_secret,
            n_useful: h.n_useful,
            secret_labels: h.secret_labels,
            useful_labels: h.useful_labels,
        }
    }
}

impl HypothesisSpace {
    pub fn new(n_secret: usize, n_useful: usize) -> Result<Self> {
        if n_secret < 2 || n_useful < 2 {
            return Err(Error::Config(format!(
                "hypothesis spaces need at least two values each, got N={n_secret}, M={n_useful}"
            )));
        }
        Ok(HypothesisSpace {
            n_secret,
            n_useful,
            secret_labels: None,
            useful_labels: None,
        })
    }

    pub fn with_labels(
        mut self,
        secret_labels: Option<Vec<String>>,
        useful_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(l) = &secret_labels {
            if l.len() != self.n_secret {
                return Err(Error::Config(format!(
                    "{} secret labels for {} secret values",
                    l.len(),
                    self.n_secret
                )));
            }
        }
        if let Some(l) = &useful_labels {
            if l.len() != self.n_useful {
                return Err(Error::Config(format!(
                    "{} useful labels for {} useful values",
                    l.len(),
                    self.n_useful
                )));
            }
        }
        self.secret_labels = secret_labels;
        self.useful_labels = useful_labels;
        Ok(self)
    }

    pub fn n_secret(&self) -> usize {
        self.n_secret
    }

    pub fn n_useful(&self) -> usize {
        self.n_useful
    }

    /// Number of joint hypotheses `N * M`.
    pub fn n_cells(&self) -> usize {
        self.n_secret * self.n_useful
    }

    pub fn secret_labels(&self) -> Option<&[String]> {
        self.secret_labels.as_deref()
    }

    pub fn useful_labels(&self) -> Option<&[String]> {
        self.useful_labels.as_deref()
    }
}

/// Conditional observation law `q(z | a, s, u)`.
///
/// Probabilities are stored densely in `[a][s][u][z]` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ObservationModel {
    spaces: HypothesisSpace,
    n_actions: usize,
    n_obs: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    spaces: HypothesisSpace,
    n_actions: usize,
    n_obs: usize,
    probs: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<ModelRepr> for ObservationModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let (n, m) = (r.spaces.n_secret, r.spaces.n_useful);
        if r.probs.len() != r.n_actions {
            return Err(Error::InvalidModel(format!(
                "probs has {} action blocks, n_actions is {}",
                r.probs.len(),
                r.n_actions
            )));
        }
        let mut flat = Vec::with_capacity(r.n_actions * n * m * r.n_obs);
        for (a, per_a) in r.probs.iter().enumerate() {
            if per_a.len() != n {
                return Err(Error::InvalidModel(format!(
                    "action {a}: expected {n} secret blocks"
                )));
            }
            for (s, per_s) in per_a.iter().enumerate() {
                if per_s.len() != m {
                    return Err(Error::InvalidModel(format!(
                        "action {a}, secret {s}: expected {m} useful rows"
                    )));
                }
                for (u, row) in per_s.iter().enumerate() {
                    if row.len() != r.n_obs {
                        return Err(Error::InvalidModel(format!(
                            "row ({a},{s},{u}) has {} entries, n_obs is {}",
                            row.len(),
                            r.n_obs
                        )));
                    }
                    flat.extend_from_slice(row);
                }
            }
        }
        ObservationModel::new(r.spaces, r.n_actions, r.n_obs, flat)
    }
}

impl From<ObservationModel> for ModelRepr {
    fn from(m: ObservationModel) -> Self {
        let probs = (0..m.n_actions)
            .map(|a| {
                (0..m.spaces.n_secret)
                    .map(|s| {
                        (0..m.spaces.n_useful)
                            .map(|u| m.row(a, s, u).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ModelRepr {
            spaces: m.spaces,
            n_actions: m.n_actions,
            n_obs: m.n_obs,
            probs,
        }
    }
}

impl ObservationModel {
    /// Builds a model from a flat `[a][s][u][z]` probability array, checking
    /// that every row is a distribution.
    pub fn new(
        spaces: HypothesisSpace,
        n_actions: usize,
        n_obs: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidModel(
                "at least one release action is required".into(),
            ));
        }
        if n_obs == 0 {
            return Err(Error::InvalidModel("observation alphabet is empty".into()));
        }
        let expected = n_actions * spaces.n_cells() * n_obs;
        if probs.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: probs.len(),
            });
        }
        let model = ObservationModel {
            spaces,
            n_actions,
            n_obs,
            probs,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        for a in 0..self.n_actions {
            for s in 0..self.spaces.n_secret {
                for u in 0..self.spaces.n_useful {
                    let row = self.row(a, s, u);
                    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                        return Err(Error::InvalidModel(format!(
                            "row ({a},{s},{u}) has entry {p} outside [0, 1]"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > ROW_TOL {
                        return Err(Error::InvalidModel(format!(
                            "row ({a},{s},{u}) sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn spaces(&self) -> &HypothesisSpace {
        &self.spaces
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_secret(&self) -> usize {
        self.spaces.n_secret
    }

    pub fn n_useful(&self) -> usize {
        self.spaces.n_useful
    }

    #[inline]
    fn offset(&self, a: usize, s: usize, u: usize) -> usize {
        ((a * self.spaces.n_secret + s) * self.spaces.n_useful + u) * self.n_obs
    }

    /// The distribution over observations for `(a, s, u)`.
    #[inline]
    pub fn row(&self, a: usize, s: usize, u: usize) -> &[f64] {
        let o = self.offset(a, s, u);
        &self.probs[o..o + self.n_obs]
    }

    #[inline]
    pub fn prob(&self, a: usize, s: usize, u: usize, z: usize) -> f64 {
        self.probs[self.offset(a, s, u) + z]
    }

    /// Flat `[a][s][u][z]` probability array.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Joint prior `p0(s, u)`, row-major over `(s, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    n_secret: usize,
    n_useful: usize,
    joint: Vec<f64>,
}

impl Prior {
    pub fn new(n_secret: usize, n_useful: usize, joint: Vec<f64>) -> Result<Self> {
        if joint.len() != n_secret * n_useful {
            return Err(Error::LengthMismatch {
                expected: n_secret * n_useful,
                got: joint.len(),
            });
        }
        if joint.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config(
                "prior has a negative or non-finite entry".into(),
            ));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > ROW_TOL {
            return Err(Error::Config(format!("prior sums to {total}, expected 1")));
        }
        Ok(Prior {
            n_secret,
            n_useful,
            joint,
        })
    }

    pub fn uniform(spaces: &HypothesisSpace) -> Self {
        let k = spaces.n_cells();
        Prior {
            n_secret: spaces.n_secret,
            n_useful: spaces.n_useful,
            joint: vec![1.0 / k as f64; k],
        }
    }

    /// Point mass at `(s, u)`.
    pub fn point(spaces: &HypothesisSpace, s: usize, u: usize) -> Self {
        let mut joint = vec![0.0; spaces.n_cells()];
        joint[s * spaces.n_useful + u] = 1.0;
        Prior {
            n_secret: spaces.n_secret,
            n_useful: spaces.n_useful,
            joint,
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

    pub fn get(&self, s: usize, u: usize) -> f64 {
        self.joint[s * self.n_useful + u]
    }

    pub fn marginal_secret(&self) -> Vec<f64> {
        self.joint
            .chunks(self.n_useful)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn marginal_useful(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_useful];
        for row in self.joint.chunks(self.n_useful) {
            for (acc, p) in m.iter_mut().zip(row) {
                *acc += p;
            }
        }
        m
    }
}

/// Kullback-Leibler divergence `D(p || q)` in nats.
///
/// Returns `f64::INFINITY` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        d += pi * libm::log(pi / qi);
    }
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub u: usize,
    pub u_prime: usize,
    /// Smallest action separating the pair for every secret, if any.
    pub action: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub ok: bool,
    pub witnesses: Vec<PairWitness>,
}

impl IdentifiabilityReport {
    pub fn failing_pairs(&self) -> impl Iterator<Item = &PairWitness> {
        self.witnesses.iter().filter(|w| w.action.is_none())
    }
}

/// Checks that every pair of useful hypotheses is separated by at least one
/// action regardless of the secret value.
pub fn check_identifiability(model: &ObservationModel) -> IdentifiabilityReport {
    let (n, m) = (model.n_secret(), model.n_useful());
    let mut witnesses = Vec::new();
    for u in 0..m {
        for u_prime in (u + 1)..m {
            let action = (0..model.n_actions()).find(|&a| {
                (0..n).all(|s| {
                    // rows have equal length by construction
                    let d =
                        kl_divergence(model.row(a, s, u), model.row(a, s, u_prime)).unwrap_or(0.0);
                    d > 1e-12
                })
            });
            witnesses.push(PairWitness { u, u_prime, action });
        }
    }
    let ok = witnesses.iter().all(|w| w.action.is_some());
    IdentifiabilityReport { ok, witnesses }
}

/// Secret value that release mechanism `a` discloses in the synthetic model.
///
/// Action 0 discloses the last secret, action 1 the one before, and so on,
/// cycling with period `n_secret`: `disclosed(a) = N - 1 - (a mod N)`.
pub fn disclosed_secret(a: usize, n_secret: usize) -> usize {
    n_secret - 1 - (a % n_secret)
}

/// Mean of the Gaussian used for row `(a, s, u)` of the synthetic model:
/// `u + 1` on the disclosed secret, `0` everywhere else.
pub fn synthetic_mean(a: usize, s: usize, u: usize, n_secret: usize) -> f64 {
    if s == disclosed_secret(a, n_secret) {
        (u + 1) as f64
    } else {
        0.0
    }
}

/// Gaussian density evaluated at integer observation values `0..n_obs`,
/// normalized to a distribution.
pub fn discretized_gaussian(mean: f64, sigma: f64, n_obs: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n_obs)
        .map(|z| {
            let d = (z as f64 - mean) / sigma;
            libm::exp(-0.5 * d * d)
        })
        .collect();
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

/// Generates the synthetic model: each action reveals the useful hypothesis
/// well only under one secret value, with per-row noise scale drawn uniformly
/// from `[sigma_lo, sigma_hi]` in `(a, s, u)` order.
pub fn build_synthetic(
    seed: u64,
    n_actions: usize,
    n_secret: usize,
    n_useful: usize,
    n_obs: usize,
    sigma_lo: f64,
    sigma_hi: f64,
) -> Result<ObservationModel> {
    use rand::Rng;

    let spaces = HypothesisSpace::new(n_secret, n_useful)?;
    if n_actions == 0 {
        return Err(Error::Config("n_actions must be positive".into()));
    }
    if n_obs < 2 {
        return Err(Error::Config(format!(
            "n_obs must be at least 2, got {n_obs}"
        )));
    }
    if !(sigma_lo > 0.0 && sigma_lo <= sigma_hi && sigma_hi.is_finite()) {
        return Err(Error::Config(format!(
            "need 0 < sigma_lo <= sigma_hi, got [{sigma_lo}, {sigma_hi}]"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut probs = Vec::with_capacity(n_actions * n_secret * n_useful * n_obs);
    for a in 0..n_actions {
        for s in 0..n_secret {
            for u in 0..n_useful {
                let sigma = sigma_lo + (sigma_hi - sigma_lo) * rng.gen::<f64>();
                let mean = synthetic_mean(a, s, u, n_secret);
                probs.extend(discretized_gaussian(mean, sigma, n_obs));
            }
        }
    }
    ObservationModel::new(spaces, n_actions, n_obs, probs)
}

/// One labeled scalar reading, already mapped to indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledReading {
    pub action: usize,
    pub reading: f64,
    pub secret: usize,
    pub useful: usize,
}

/// Empirically fitted model together with the per-action bin cut points.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: ObservationModel,
    /// `cuts[a]` holds `n_obs - 1` nondecreasing thresholds; a reading `x`
    /// falls in bin `#{k : x >= cuts[a][k]}`.
    pub cuts: Vec<Vec<f64>>,
}

impl FittedModel {
    pub fn quantize(&self, action: usize, reading: f64) -> usize {
        bin_of(&self.cuts[action], reading)
    }
}

/// Equal-frequency cut points for `n_bins` bins over `values`.
pub fn equal_frequency_cuts(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (1..n_bins)
        .map(|k| sorted[(k * n / n_bins).min(n - 1)])
        .collect()
}

pub fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c <= x)
}

/// Estimates `q(z | a, s, u)` from labeled readings with per-action
/// equal-frequency quantization and additive smoothing.
///
/// Row numbers in errors are 1-based positions in `records`.
pub fn fit_from_records(
    records: &[LabeledReading],
    spaces: HypothesisSpace,
    n_actions: usize,
    n_obs: usize,
    smoothing: f64,
) -> Result<FittedModel> {
    if records.is_empty() {
        return Err(Error::Ingest {
            row: 0,
            msg: "no records".into(),
        });
    }
    if n_obs < 2 {
        return Err(Error::Config(format!(
            "n_obs must be at least 2, got {n_obs}"
        )));
    }
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::Config(format!(
            "smoothing must be finite and >= 0, got {smoothing}"
        )));
    }
    let (n, m) = (spaces.n_secret, spaces.n_useful);
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        if r.action >= n_actions {
            return Err(Error::Ingest {
                row,
                msg: format!("unknown action {}", r.action),
            });
        }
        if r.secret >= n {
            return Err(Error::Ingest {
                row,
                msg: format!("unknown secret {}", r.secret),
            });
        }
        if r.useful >= m {
            return Err(Error::Ingest {
                row,
                msg: format!("unknown useful {}", r.useful),
            });
        }
        if !r.reading.is_finite() {
            return Err(Error::Ingest {
                row,
                msg: format!("non-finite reading {}", r.reading),
            });
        }
    }

    let mut cuts = Vec::with_capacity(n_actions);
    for a in 0..n_actions {
        let pooled: Vec<f64> = records
            .iter()
            .filter(|r| r.action == a)
            .map(|r| r.reading)
            .collect();
        if pooled.is_empty() {
            if smoothing <= 0.0 {
                return Err(Error::Ingest {
                    row: 0,
                    msg: format!("action {a} has no readings and smoothing is 0"),
                });
            }
            cuts.push(vec![0.0; n_obs - 1]);
        } else {
            cuts.push(equal_frequency_cuts(&pooled, n_obs));
        }
    }

    let mut counts = vec![0.0f64; n_actions * n * m * n_obs];
    for r in records {
        let z = bin_of(&cuts[r.action], r.reading);
        counts[((r.action * n + r.secret) * m + r.useful) * n_obs + z] += 1.0;
    }
    for (cell, row) in counts.chunks_mut(n_obs).enumerate() {
        let total: f64 = row.iter().sum();
        let denom = total + smoothing * n_obs as f64;
        if denom <= 0.0 {
            let (a, s, u) = (cell / (n * m), (cell / m) % n, cell % m);
            return Err(Error::Ingest {
                row: 0,
                msg: format!(
                    "no readings for (action {a}, secret {s}, useful {u}) and smoothing is 0"
                ),
            });
        }
        for c in row.iter_mut() {
            *c = (*c + smoothing) / denom;
        }
    }
    let model = ObservationModel::new(spaces, n_actions, n_obs, counts)?;
    Ok(FittedModel { model, cuts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spaces(n: usize, m: usize) -> HypothesisSpace {
        HypothesisSpace::new(n, m).unwrap()
    }

    #[test]
    fn space_rejects_degenerate_sizes() {
        assert!(HypothesisSpace::new(1, 3).is_err());
        assert!(HypothesisSpace::new(3, 1).is_err());
        let h = spaces(2, 3);
        assert!(h.clone().with_labels(Some(vec!["a".into()]), None).is_err());
        assert!(h
            .with_labels(None, Some(vec!["x".into(), "y".into(), "z".into()]))
            .is_ok());
    }

    #[test]
    fn model_rejects_unnormalized_rows() {
        let err = ObservationModel::new(
            spaces(2, 2),
            1,
            2,
            vec![0.5, 0.6, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let err = ObservationModel::new(spaces(2, 2), 1, 2, vec![0.5; 6]);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(
            kl_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            f64::INFINITY
        );
        // 0.75 ln 1.5 + 0.25 ln 0.5
        let expected = 0.130_812_035_941_137_53;
        assert!((kl_divergence(&[0.75, 0.25], &[0.5, 0.5]).unwrap() - expected).abs() < 1e-15);
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn u_independent_model_is_not_identifiable() {
        let probs = vec![0.3, 0.7, 0.3, 0.7, 0.6, 0.4, 0.6, 0.4];
        let model = ObservationModel::new(spaces(2, 2), 1, 2, probs).unwrap();
        let report = check_identifiability(&model);
        assert!(!report.ok);
        let failing: Vec<_> = report.failing_pairs().collect();
        assert_eq!(failing.len(), 1);
        assert_eq!((failing[0].u, failing[0].u_prime), (0, 1));
    }

    #[test]
    fn disjoint_support_action_is_universal_witness() {
        // action 0 uninformative, action 1 puts u on disjoint observations
        let mut all: Vec<f64> = vec![1.0 / 3.0; 2 * 3 * 3];
        for _s in 0..2 {
            for u in 0..3 {
                let mut r = [0.0; 3];
                r[u] = 1.0;
                all.extend(r);
            }
        }
        let model = ObservationModel::new(spaces(2, 3), 2, 3, all).unwrap();
        let report = check_identifiability(&model);
        assert!(report.ok);
        assert!(report.witnesses.iter().all(|w| w.action == Some(1)));
    }

    #[test]
    fn synthetic_mean_map_matches_documented_pattern() {
        // a=0 discloses s=2, a=1 discloses s=1, a=2 discloses s=0
        assert_eq!(disclosed_secret(0, 3), 2);
        assert_eq!(disclosed_secret(1, 3), 1);
        assert_eq!(disclosed_secret(2, 3), 0);
        assert_eq!(disclosed_secret(3, 3), 2);
        assert_eq!(synthetic_mean(0, 2, 0, 3), 1.0);
        assert_eq!(synthetic_mean(0, 2, 2, 3), 3.0);
        assert_eq!(synthetic_mean(0, 1, 2, 3), 0.0);
    }

    #[test]
    fn synthetic_is_reproducible_and_validates_inputs() {
        let a = build_synthetic(7, 3, 3, 3, 50, 0.5, 1.5).unwrap();
        let b = build_synthetic(7, 3, 3, 3, 50, 0.5, 1.5).unwrap();
        assert_eq!(a, b);
        let c = build_synthetic(8, 3, 3, 3, 50, 0.5, 1.5).unwrap();
        assert_ne!(a, c);
        assert!(build_synthetic(7, 3, 3, 3, 1, 0.5, 1.5).is_err());
        assert!(build_synthetic(7, 3, 3, 3, 10, 0.0, 1.5).is_err());
        assert!(build_synthetic(7, 3, 3, 3, 10, 1.5, 0.5).is_err());
    }

    #[test]
    fn degenerate_sigma_gives_identical_rows_per_mean() {
        let model = build_synthetic(11, 3, 3, 3, 10, 0.8, 0.8).unwrap();
        for a in 0..3 {
            for s in 0..3 {
                for u in 0..3 {
                    for (a2, s2, u2) in [(0, 0, 0), (1, 0, 0), (2, 2, 1)] {
                        if synthetic_mean(a, s, u, 3) == synthetic_mean(a2, s2, u2, 3) {
                            assert_eq!(model.row(a, s, u), model.row(a2, s2, u2));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn equal_frequency_bins_are_balanced() {
        let values: Vec<f64> = (0..23).map(|i| ((i * 7919) % 101) as f64 + 0.5).collect();
        let cuts = equal_frequency_cuts(&values, 5);
        let mut occ = [0usize; 5];
        for &v in &values {
            occ[bin_of(&cuts, v)] += 1;
        }
        let (lo, hi) = (occ.iter().min().unwrap(), occ.iter().max().unwrap());
        assert!(hi - lo <= 1, "{occ:?}");
    }

    #[test]
    fn fitting_point_mass_and_smoothing_limit() {
        let sp = spaces(2, 2);
        let mut recs = vec![];
        for s in 0..2 {
            for u in 0..2 {
                for k in 0..3 {
                    recs.push(LabeledReading {
                        action: 0,
                        reading: (s * 2 + u) as f64 * 10.0 + k as f64 * 0.01,
                        secret: s,
                        useful: u,
                    });
                }
            }
        }
        let fitted = fit_from_records(&recs, sp.clone(), 1, 4, 0.0).unwrap();
        for s in 0..2 {
            for u in 0..2 {
                let row = fitted.model.row(0, s, u);
                assert_eq!(row.iter().filter(|p| **p == 1.0).count(), 1, "{row:?}");
            }
        }
        let smooth = fit_from_records(&recs, sp, 1, 4, 1e9).unwrap();
        for p in smooth.model.probs() {
            assert!((p - 0.25).abs() < 1e-8);
        }
    }

    #[test]
    fn fitting_reports_bad_rows() {
        let sp = spaces(2, 2);
        let recs = [
            LabeledReading {
                action: 0,
                reading: 1.0,
                secret: 0,
                useful: 0,
            },
            LabeledReading {
                action: 0,
                reading: 1.0,
                secret: 5,
                useful: 0,
            },
        ];
        match fit_from_records(&recs, sp.clone(), 1, 2, 1.0) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            fit_from_records(&[], sp.clone(), 1, 2, 1.0),
            Err(Error::Ingest { .. })
        ));
        let nan = [LabeledReading {
            action: 0,
            reading: f64::NAN,
            secret: 0,
            useful: 0,
        }];
        assert!(matches!(
            fit_from_records(&nan, sp, 1, 2, 1.0),
            Err(Error::Ingest { row: 1, .. })
        ));
    }

    #[test]
    fn prior_marginals() {
        let p = Prior::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let ms = p.marginal_secret();
        let mu = p.marginal_useful();
        assert!((ms[0] - 0.3).abs() < 1e-15 && (ms[1] - 0.7).abs() < 1e-15);
        assert!((mu[0] - 0.4).abs() < 1e-15 && (mu[1] - 0.6).abs() < 1e-15);
        assert!(Prior::new(2, 2, vec![0.5, 0.5, 0.5, -0.5]).is_err());
    }
}
