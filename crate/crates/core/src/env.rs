//! Episodic POMDP environment for sequential data release.
//!
//! Each episode draws a hidden `(s, u)` from the prior. At every step the
//! policy either releases a sample through one mechanism (paying the time
//! cost, the provider updates its belief) or stops, paying
//! `λ (1 - max_u β(u))` for the probability of a wrong declaration.
//! Entering the forbidden region (secret confidence at or above `L_B`, or
//! cumulative leakage at or above `L_MI`) costs `forbidden_cost` instead of
//! the time cost for that step.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::mi::instantaneous_mi;
use crate::model::{check_identifiability, ObservationModel, Prior};
use crate::policy::{release_distribution, PolicyView};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Release(usize),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForbiddenMode {
    /// Violation ends the episode with the forbidden cost.
    Terminate,
    /// Violation is charged on every release step while the condition holds.
    PenalizeContinue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda: f64,
    pub time_cost: f64,
    pub forbidden_cost: f64,
    pub gamma: f64,
    pub t_max: usize,
    pub scale_stop_cost_by_time_cost: bool,
    pub forbidden_mode: ForbiddenMode,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            lambda: 50.0,
            time_cost: 0.5,
            forbidden_cost: 500.0,
            gamma: 0.99,
            t_max: 50,
            scale_stop_cost_by_time_cost: false,
            forbidden_mode: ForbiddenMode::Terminate,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.time_cost > 0.0) || !self.time_cost.is_finite() {
            return Err(Error::Config(format!(
                "time_cost must be positive, got {}",
                self.time_cost
            )));
        }
        if !(self.forbidden_cost > self.lambda) || !self.forbidden_cost.is_finite() {
            return Err(Error::Config(format!(
                "forbidden_cost ({}) must exceed lambda ({})",
                self.forbidden_cost, self.lambda
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Cost of declaring `argmax_u β(u)` now.
    pub fn stop_cost(&self, belief: &Belief) -> f64 {
        let (_, conf) = belief.max_confidence_useful();
        let c = self.lambda * (1.0 - conf).max(0.0);
        if self.scale_stop_cost_by_time_cost {
            c * self.time_cost
        } else {
            c
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrivacySpec {
    /// Secret confidence must stay strictly below `l_b`.
    BeliefThreshold { l_b: f64 },
    /// Cumulative leakage (nats) must stay strictly below `l_mi`.
    MiBudget { l_mi: f64 },
}

impl PrivacySpec {
    pub fn threshold(&self) -> f64 {
        match *self {
            PrivacySpec::BeliefThreshold { l_b } => l_b,
            PrivacySpec::MiBudget { l_mi } => l_mi,
        }
    }

    /// Same kind of constraint with a different threshold.
    pub fn with_threshold(&self, t: f64) -> PrivacySpec {
        match self {
            PrivacySpec::BeliefThreshold { .. } => PrivacySpec::BeliefThreshold { l_b: t },
            PrivacySpec::MiBudget { .. } => PrivacySpec::MiBudget { l_mi: t },
        }
    }

    pub fn validate(&self, prior: &Prior) -> Result<()> {
        match *self {
            PrivacySpec::BeliefThreshold { l_b } => {
                let max_prior = prior.marginal_secret().into_iter().fold(0.0, f64::max);
                if !(l_b <= 1.0) {
                    return Err(Error::Config(format!("L_B must be at most 1, got {l_b}")));
                }
                if !(l_b > max_prior) {
                    return Err(Error::Config(format!(
                        "L_B = {l_b} is already violated by the prior (max secret marginal {max_prior})"
                    )));
                }
            }
            PrivacySpec::MiBudget { l_mi } => {
                if !(l_mi > 0.0) || !l_mi.is_finite() {
                    return Err(Error::Config(format!("L_MI must be positive, got {l_mi}")));
                }
            }
        }
        Ok(())
    }

    /// `false` for an MI budget above `ln N`, which no policy can exhaust in
    /// expectation.
    pub fn is_meaningful(&self, n_secret: usize) -> bool {
        match *self {
            PrivacySpec::BeliefThreshold { .. } => true,
            PrivacySpec::MiBudget { l_mi } => l_mi <= libm::log(n_secret as f64),
        }
    }

    /// Whether `(belief, cumulative_mi)` lies in the forbidden region. A
    /// belief threshold of 1 is vacuous.
    pub fn violated(&self, belief: &Belief, cumulative_mi: f64) -> bool {
        match *self {
            // L_B = 1 imposes no constraint
            PrivacySpec::BeliefThreshold { l_b } => {
                l_b < 1.0 && belief.max_confidence_secret().1 >= l_b
            }
            PrivacySpec::MiBudget { l_mi } => cumulative_mi >= l_mi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Active,
    /// Inside the forbidden region under [`ForbiddenMode::PenalizeContinue`].
    Forbidden,
    Terminal,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub belief: Belief,
    pub cumulative_mi: f64,
    pub step: usize,
    pub phase: Phase,
    pub violated: bool,
    hidden: (usize, usize),
    rng: ChaCha8Rng,
}

impl EnvState {
    /// The true `(s, u)`; never passed to policies.
    pub fn hidden(&self) -> (usize, usize) {
        self.hidden
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Terminal
    }

    pub fn view(&self) -> PolicyView<'_> {
        PolicyView {
            belief: &self.belief,
            cumulative_mi: self.cumulative_mi,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub cost: f64,
    pub observation: Option<usize>,
    pub done: bool,
    pub violation: bool,
    pub declared_useful: Option<usize>,
    /// Instantaneous leakage charged on this step (0 on STOP).
    pub mi_increment: f64,
    /// STOP was applied because the horizon was reached.
    pub forced_stop: bool,
}

/// Static description of one decision problem. Cheap to share by reference
/// across rollout workers.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    model: &'a ObservationModel,
    prior: &'a Prior,
    costs: CostParams,
    privacy: PrivacySpec,
    identifiable: bool,
}

impl<'a> Env<'a> {
    pub fn new(
        model: &'a ObservationModel,
        prior: &'a Prior,
        costs: CostParams,
        privacy: PrivacySpec,
    ) -> Result<Self> {
        if prior.n_secret() != model.n_secret() || prior.n_useful() != model.n_useful() {
            return Err(Error::Config(
                "prior and model hypothesis spaces differ".into(),
            ));
        }
        costs.validate()?;
        privacy.validate(prior)?;
        let identifiable = check_identifiability(model).ok;
        Ok(Env {
            model,
            prior,
            costs,
            privacy,
            identifiable,
        })
    }

    pub fn model(&self) -> &'a ObservationModel {
        self.model
    }

    pub fn prior(&self) -> &'a Prior {
        self.prior
    }

    pub fn costs(&self) -> &CostParams {
        &self.costs
    }

    pub fn privacy(&self) -> &PrivacySpec {
        &self.privacy
    }

    /// Result of the identifiability check run at construction.
    pub fn identifiable(&self) -> bool {
        self.identifiable
    }

    pub fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    /// Starts an episode: hidden `(s, u)` drawn from the prior with a
    /// generator seeded by `seed`, which also drives all later observations.
    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = seed::rng(seed);
        let cell = seed::sample_index(self.prior.joint(), &mut rng);
        let m = self.prior.n_useful();
        EnvState {
            belief: Belief::from_prior(self.prior),
            cumulative_mi: 0.0,
            step: 0,
            phase: Phase::Active,
            violated: false,
            hidden: (cell / m, cell % m),
            rng,
        }
    }

    /// Advances the episode. `policy_dist` is the acting policy's full
    /// distribution (STOP last); its release part weights the leakage charge.
    pub fn step(
        &self,
        state: &mut EnvState,
        action: Action,
        policy_dist: &[f64],
    ) -> Result<StepOutcome> {
        if state.phase == Phase::Terminal {
            return Err(Error::EpisodeDone);
        }
        let a = match action {
            Action::Stop => {
                let cost = self.costs.stop_cost(&state.belief);
                state.phase = Phase::Terminal;
                return Ok(StepOutcome {
                    cost,
                    observation: None,
                    done: true,
                    violation: false,
                    declared_useful: Some(state.belief.max_confidence_useful().0),
                    mi_increment: 0.0,
                    forced_stop: false,
                });
            }
            Action::Release(a) => a,
        };
        if a >= self.model.n_actions() {
            return Err(Error::ActionOutOfRange {
                action: a,
                n_actions: self.model.n_actions(),
            });
        }
        if policy_dist.len() != self.model.n_actions() + 1 {
            return Err(Error::LengthMismatch {
                expected: self.model.n_actions() + 1,
                got: policy_dist.len(),
            });
        }

        let (s, u) = state.hidden;
        let z = seed::sample_index(self.model.row(a, s, u), &mut state.rng);
        let release = release_distribution(policy_dist, Some(a));
        let mi_increment = instantaneous_mi(&state.belief, &release, self.model);
        state.belief = state.belief.update(self.model, a, z)?;
        state.cumulative_mi += mi_increment;
        state.step += 1;

        let mut out = StepOutcome {
            cost: self.costs.time_cost,
            observation: Some(z),
            done: false,
            violation: false,
            declared_useful: None,
            mi_increment,
            forced_stop: false,
        };
        if self.privacy.violated(&state.belief, state.cumulative_mi) {
            out.violation = true;
            out.cost = self.costs.forbidden_cost;
            state.violated = true;
            match self.costs.forbidden_mode {
                ForbiddenMode::Terminate => {
                    state.phase = Phase::Terminal;
                    out.done = true;
                    return Ok(out);
                }
                ForbiddenMode::PenalizeContinue => state.phase = Phase::Forbidden,
            }
        } else if state.phase == Phase::Forbidden {
            state.phase = Phase::Active;
        }

        if state.step >= self.costs.t_max {
            out.cost += self.costs.stop_cost(&state.belief);
            out.declared_useful = Some(state.belief.max_confidence_useful().0);
            out.forced_stop = true;
            out.done = true;
            state.phase = Phase::Terminal;
        }
        Ok(out)
    }
}

/// How policy networks see a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub n_secret: usize,
    pub n_useful: usize,
    pub privacy: PrivacySpec,
    pub t_max: usize,
    /// Append the remaining-budget feature for MI budgets.
    pub budget_feature: bool,
}

impl FeatureSpec {
    pub fn new(n_secret: usize, n_useful: usize, privacy: PrivacySpec, t_max: usize) -> Self {
        FeatureSpec {
            n_secret,
            n_useful,
            privacy,
            t_max,
            budget_feature: true,
        }
    }

    pub fn len(&self) -> usize {
        self.n_secret * self.n_useful + 1 + usize::from(self.has_budget())
    }

    fn has_budget(&self) -> bool {
        self.budget_feature && matches!(self.privacy, PrivacySpec::MiBudget { .. })
    }

    /// Flattened joint belief, then the remaining MI budget fraction (MI
    /// budgets only), then `step / t_max`.
    pub fn encode(&self, view: &PolicyView<'_>) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(view.belief.joint());
        if self.has_budget() {
            let l = self.privacy.threshold();
            x.push(((l - view.cumulative_mi) / l).max(0.0));
        }
        x.push(view.step as f64 / self.t_max as f64);
        x
    }
}

/// Feature vector for `state` with the default feature layout.
pub fn encode_state(state: &EnvState, privacy: &PrivacySpec, t_max: usize) -> Vec<f64> {
    FeatureSpec::new(
        state.belief.n_secret(),
        state.belief.n_useful(),
        *privacy,
        t_max,
    )
    .encode(&state.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HypothesisSpace;

    fn uninformative() -> ObservationModel {
        ObservationModel::new(
            HypothesisSpace::new(3, 3).unwrap(),
            2,
            2,
            alloc::vec![0.5; 2 * 9 * 2],
        )
        .unwrap()
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::default().validate().is_ok());
        let bad = CostParams {
            forbidden_cost: 10.0,
            ..CostParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = CostParams {
            t_max: 0,
            ..CostParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = CostParams {
            gamma: 1.5,
            ..CostParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn threshold_below_prior_is_rejected() {
        let model = uninformative();
        let prior = Prior::uniform(model.spaces());
        let r = Env::new(
            &model,
            &prior,
            CostParams::default(),
            PrivacySpec::BeliefThreshold { l_b: 0.3 },
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn reset_is_deterministic_and_respects_point_prior() {
        let model = uninformative();
        let prior = Prior::uniform(model.spaces());
        let env = Env::new(
            &model,
            &prior,
            CostParams::default(),
            PrivacySpec::BeliefThreshold { l_b: 0.9 },
        )
        .unwrap();
        assert_eq!(env.reset(42).hidden(), env.reset(42).hidden());

        let point = Prior::point(model.spaces(), 1, 2);
        let env = Env::new(
            &model,
            &point,
            CostParams::default(),
            PrivacySpec::MiBudget { l_mi: 0.5 },
        )
        .unwrap();
        for seed in 0..50 {
            assert_eq!(env.reset(seed).hidden(), (1, 2));
        }
    }

    #[test]
    fn uninformative_model_runs_to_forced_stop() {
        let model = uninformative();
        let prior = Prior::uniform(model.spaces());
        let costs = CostParams {
            t_max: 5,
            ..CostParams::default()
        };
        let env = Env::new(
            &model,
            &prior,
            costs,
            PrivacySpec::BeliefThreshold { l_b: 0.5 },
        )
        .unwrap();
        let mut st = env.reset(1);
        let dist = [0.5, 0.5, 0.0];
        let mut total = 0.0;
        for t in 0..5 {
            let out = env.step(&mut st, Action::Release(t % 2), &dist).unwrap();
            assert!(!out.violation);
            total += out.cost;
            assert_eq!(out.done, t == 4);
        }
        assert!(st.is_done());
        let stop = 50.0 * (1.0 - 1.0 / 3.0);
        assert!((total - (5.0 * 0.5 + stop)).abs() < 1e-12);
        for p in st.belief.joint() {
            assert!((p - 1.0 / 9.0).abs() < 1e-15);
        }
        assert_eq!(
            env.step(&mut st, Action::Stop, &dist),
            Err(Error::EpisodeDone)
        );
    }

    #[test]
    fn stop_with_certain_useful_is_free() {
        let model = uninformative();
        let mut joint = alloc::vec![0.0; 9];
        joint[1] = 0.5;
        joint[4] = 0.5;
        let prior = Prior::new(3, 3, joint).unwrap();
        let env = Env::new(
            &model,
            &prior,
            CostParams::default(),
            PrivacySpec::BeliefThreshold { l_b: 0.9 },
        )
        .unwrap();
        let mut st = env.reset(0);
        let out = env.step(&mut st, Action::Stop, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(out.cost, 0.0);
        assert_eq!(out.declared_useful, Some(1));
        assert_eq!(out.declared_useful, Some(st.hidden().1));
    }

    #[test]
    fn scaled_stop_cost() {
        let b = Belief::uniform(2, 2);
        let c = CostParams {
            lambda: 10.0,
            time_cost: 0.5,
            forbidden_cost: 100.0,
            ..CostParams::default()
        };
        assert!((c.stop_cost(&b) - 5.0).abs() < 1e-15);
        let c = CostParams {
            scale_stop_cost_by_time_cost: true,
            ..c
        };
        assert!((c.stop_cost(&b) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn encoding_layout() {
        let model = ObservationModel::new(
            HypothesisSpace::new(2, 2).unwrap(),
            1,
            2,
            alloc::vec![0.5; 8],
        )
        .unwrap();
        let prior = Prior::uniform(model.spaces());
        let env = Env::new(
            &model,
            &prior,
            CostParams {
                t_max: 10,
                ..CostParams::default()
            },
            PrivacySpec::BeliefThreshold { l_b: 0.9 },
        )
        .unwrap();
        let mut st = env.reset(0);
        assert_eq!(
            encode_state(&st, env.privacy(), 10),
            alloc::vec![0.25, 0.25, 0.25, 0.25, 0.0]
        );

        let mi = PrivacySpec::MiBudget { l_mi: 0.4 };
        assert_eq!(encode_state(&st, &mi, 10)[4], 1.0);
        st.cumulative_mi = 0.2;
        st.step = 3;
        let x = encode_state(&st, &mi, 10);
        assert_eq!(x.len(), 6);
        assert!((x[4] - 0.5).abs() < 1e-15);
        assert!((x[5] - 0.3).abs() < 1e-15);

        let mut spec = FeatureSpec::new(2, 2, mi, 10);
        spec.budget_feature = false;
        assert_eq!(spec.encode(&st.view()).len(), 5);
    }
}
