//! Value iteration over a discretized belief simplex.
//!
//! Only practical for tiny instances (`N·M <= 6`, resolution `<= 20`); it
//! serves as a ground-truth oracle for the learned policies. Post-update
//! beliefs are projected to the nearest lattice point in `ℓ1`. For MI budgets
//! the remaining budget is an extra state axis with [`BUDGET_LEVELS`] levels.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::env::{Action, CostParams, ForbiddenMode, PrivacySpec};
use crate::mi::instantaneous_mi;
use crate::model::ObservationModel;
use crate::policy::{Policy, PolicyView};
use crate::{Error, Result};

pub const MAX_CELLS: usize = 6;
pub const MAX_RESOLUTION: usize = 20;
pub const BUDGET_LEVELS: usize = 16;

/// All beliefs whose entries are multiples of `1 / resolution`.
#[derive(Debug, Clone)]
pub struct BeliefGrid {
    n_secret: usize,
    n_useful: usize,
    resolution: usize,
    points: Vec<Vec<u32>>,
    index: BTreeMap<Vec<u32>, usize>,
}

impl BeliefGrid {
    pub fn new(n_secret: usize, n_useful: usize, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        let cells = n_secret * n_useful;
        let mut points = Vec::new();
        let mut current = vec![0u32; cells];
        compositions(resolution as u32, 0, &mut current, &mut points);
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Ok(BeliefGrid {
            n_secret,
            n_useful,
            resolution,
            points,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn n_cells(&self) -> usize {
        self.n_secret * self.n_useful
    }

    pub fn counts(&self, i: usize) -> &[u32] {
        &self.points[i]
    }

    pub fn belief(&self, i: usize) -> Belief {
        let r = self.resolution as f64;
        let joint = self.points[i].iter().map(|&c| c as f64 / r).collect();
        Belief::from_weights(self.n_secret, self.n_useful, joint)
            .expect("grid points are distributions")
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Nearest lattice point in `ℓ1` (largest-remainder rounding) and the
    /// `ℓ1` distance to it.
    pub fn project(&self, belief: &Belief) -> (usize, f64) {
        let r = self.resolution as f64;
        let joint = belief.joint();
        let scaled: Vec<f64> = joint.iter().map(|p| p * r).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|x| libm::floor(*x) as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut missing = (self.resolution as u32).saturating_sub(assigned) as usize;
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&i, &j| {
            let (fi, fj) = (
                scaled[i] - libm::floor(scaled[i]),
                scaled[j] - libm::floor(scaled[j]),
            );
            fj.total_cmp(&fi).then(i.cmp(&j))
        });
        for &i in &order {
            if missing == 0 {
                break;
            }
            counts[i] += 1;
            missing -= 1;
        }
        let idx = self
            .index_of(&counts)
            .expect("rounded point lies on the lattice");
        let dist = counts
            .iter()
            .zip(joint)
            .map(|(&c, p)| (c as f64 / r - p).abs())
            .sum();
        (idx, dist)
    }
}

fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for c in (0..=remaining).rev() {
        current[pos] = c;
        compositions(remaining - c, pos + 1, current, out);
    }
}

/// Converged values and greedy actions, indexed by `point * levels + level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub n_secret: usize,
    pub n_useful: usize,
    pub resolution: usize,
    /// 1 for belief thresholds, [`BUDGET_LEVELS`] for MI budgets.
    pub levels: usize,
    pub values: Vec<f64>,
    pub greedy: Vec<Action>,
    pub iterations: usize,
    pub residual: f64,
    #[serde(default)]
    pub residual_history: Vec<f64>,
    pub costs: CostParams,
    pub privacy: PrivacySpec,
}

impl ValueTable {
    pub fn value(&self, point: usize, level: usize) -> f64 {
        self.values[point * self.levels + level]
    }

    pub fn action(&self, point: usize, level: usize) -> Action {
        self.greedy[point * self.levels + level]
    }

    pub fn grid(&self) -> Result<BeliefGrid> {
        BeliefGrid::new(self.n_secret, self.n_useful, self.resolution)
    }

    /// Budget level for a given spent leakage; `None` once the budget is gone.
    pub fn level_for(&self, cumulative_mi: f64) -> Option<usize> {
        match self.privacy {
            PrivacySpec::BeliefThreshold { .. } => Some(0),
            PrivacySpec::MiBudget { l_mi } => remaining_level(l_mi - cumulative_mi, l_mi),
        }
    }
}

/// Maps remaining budget `rem` to the nearest of the levels
/// `L (k + 1) / BUDGET_LEVELS`, `k = 0..BUDGET_LEVELS`.
fn remaining_level(rem: f64, l_mi: f64) -> Option<usize> {
    if rem <= 0.0 {
        return None;
    }
    let k = libm::round(rem * BUDGET_LEVELS as f64 / l_mi) as i64 - 1;
    Some(k.clamp(0, BUDGET_LEVELS as i64 - 1) as usize)
}

fn level_budget(level: usize, l_mi: f64) -> f64 {
    l_mi * (level + 1) as f64 / BUDGET_LEVELS as f64
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    prob: f64,
    next: usize,
    /// Exact post-update belief is in the forbidden region.
    forbidden_belief: bool,
}

struct Transitions {
    /// `[point][action] -> branches over observations`.
    branches: Vec<Vec<Vec<Branch>>>,
    /// `[point][action]` leakage of releasing with that action.
    leakage: Vec<Vec<f64>>,
    stop: Vec<f64>,
    forbidden_point: Vec<bool>,
    max_projection: f64,
}

fn transitions(
    grid: &BeliefGrid,
    model: &ObservationModel,
    costs: &CostParams,
    privacy: &PrivacySpec,
) -> Result<Transitions> {
    let na = model.n_actions();
    let mut branches = Vec::with_capacity(grid.len());
    let mut leakage = Vec::with_capacity(grid.len());
    let mut stop = Vec::with_capacity(grid.len());
    let mut forbidden_point = Vec::with_capacity(grid.len());
    let mut max_projection: f64 = 0.0;
    for i in 0..grid.len() {
        let b = grid.belief(i);
        stop.push(costs.stop_cost(&b));
        forbidden_point.push(
            matches!(privacy, PrivacySpec::BeliefThreshold { .. }) && privacy.violated(&b, 0.0),
        );
        let mut per_a = Vec::with_capacity(na);
        let mut leak_a = Vec::with_capacity(na);
        for a in 0..na {
            let mut onehot = vec![0.0; na];
            onehot[a] = 1.0;
            leak_a.push(instantaneous_mi(&b, &onehot, model));
            let mut br = Vec::new();
            for z in 0..model.n_obs() {
                let prob = b.evidence(model, a, z);
                if prob <= 0.0 {
                    continue;
                }
                let post = b.update(model, a, z)?;
                let (next, dist) = grid.project(&post);
                max_projection = max_projection.max(dist);
                let forbidden_belief = matches!(privacy, PrivacySpec::BeliefThreshold { .. })
                    && privacy.violated(&post, 0.0);
                br.push(Branch {
                    prob,
                    next,
                    forbidden_belief,
                });
            }
            per_a.push(br);
        }
        branches.push(per_a);
        leakage.push(leak_a);
    }
    Ok(Transitions {
        branches,
        leakage,
        stop,
        forbidden_point,
        max_projection,
    })
}

/// One Bellman backup at `(point, level)` with per-step cost `step_cost` and
/// stop costs `stop`. Returns `(value, greedy action)`; ties go to STOP,
/// then to the smallest release index.
fn backup(
    tr: &Transitions,
    values: &[f64],
    levels: usize,
    point: usize,
    level: usize,
    costs: &CostParams,
    privacy: &PrivacySpec,
    stop_value: f64,
) -> (f64, Action) {
    let terminate = costs.forbidden_mode == ForbiddenMode::Terminate;
    if terminate && tr.forbidden_point[point] {
        return (costs.forbidden_cost, Action::Stop);
    }
    let mut best = (stop_value, Action::Stop);
    for (a, branches) in tr.branches[point].iter().enumerate() {
        let mut q = 0.0;
        match *privacy {
            PrivacySpec::BeliefThreshold { .. } => {
                for br in branches {
                    let v_next = values[br.next * levels];
                    q += br.prob
                        * if br.forbidden_belief {
                            if terminate {
                                costs.forbidden_cost
                            } else {
                                costs.forbidden_cost + costs.gamma * v_next
                            }
                        } else {
                            costs.time_cost + costs.gamma * v_next
                        };
                }
            }
            PrivacySpec::MiBudget { l_mi } => {
                let rem = level_budget(level, l_mi) - tr.leakage[point][a];
                match remaining_level(rem, l_mi) {
                    None => q = costs.forbidden_cost,
                    Some(next_level) => {
                        for br in branches {
                            q += br.prob
                                * (costs.time_cost
                                    + costs.gamma * values[br.next * levels + next_level]);
                        }
                    }
                }
            }
        }
        if q < best.0 {
            best = (q, Action::Release(a));
        }
    }
    best
}

/// Solves `V(β) = min{ stop(β), min_a Σ_z p(z|β,a) [c + γ V(proj Φ(β,z,a))] }`
/// where `c` is the time cost, or the forbidden cost when the update enters
/// the forbidden region (which ends the episode under
/// [`ForbiddenMode::Terminate`]).
pub fn value_iteration(
    model: &ObservationModel,
    grid: &BeliefGrid,
    costs: &CostParams,
    privacy: &PrivacySpec,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTable> {
    if grid.n_cells() != model.spaces().n_cells() {
        return Err(Error::Config(
            "grid and model hypothesis spaces differ".into(),
        ));
    }
    if grid.n_cells() > MAX_CELLS || grid.resolution() > MAX_RESOLUTION {
        return Err(Error::TooLarge {
            needed: grid.len() as u128,
            limit: (MAX_CELLS * 1000 + MAX_RESOLUTION) as u128,
        });
    }
    costs.validate()?;
    if !(costs.gamma < 1.0) {
        return Err(Error::Config(format!(
            "value iteration needs gamma < 1, got {}",
            costs.gamma
        )));
    }
    if matches!(privacy, PrivacySpec::MiBudget { .. })
        && costs.forbidden_mode != ForbiddenMode::Terminate
    {
        return Err(Error::Config(
            "MI-budget value iteration supports the terminate forbidden mode only".into(),
        ));
    }
    let levels = match privacy {
        PrivacySpec::BeliefThreshold { .. } => 1,
        PrivacySpec::MiBudget { .. } => BUDGET_LEVELS,
    };
    let tr = transitions(grid, model, costs, privacy)?;
    let n_states = grid.len() * levels;
    let mut values = vec![0.0; n_states];
    let mut greedy = vec![Action::Stop; n_states];
    let mut history = Vec::new();
    for iter in 1..=max_iter {
        let mut next = vec![0.0; n_states];
        let mut residual: f64 = 0.0;
        for p in 0..grid.len() {
            for l in 0..levels {
                let (v, act) = backup(&tr, &values, levels, p, l, costs, privacy, tr.stop[p]);
                let idx = p * levels + l;
                residual = residual.max((v - values[idx]).abs());
                next[idx] = v;
                greedy[idx] = act;
            }
        }
        values = next;
        history.push(residual);
        if residual < tol {
            return Ok(ValueTable {
                n_secret: model.n_secret(),
                n_useful: model.n_useful(),
                resolution: grid.resolution(),
                levels,
                values,
                greedy,
                iterations: iter,
                residual,
                residual_history: history,
                costs: *costs,
                privacy: *privacy,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `max (V - rhs)` over checked states, floored at 0.
    pub max_violation: f64,
    /// State index `point * levels + level` of the worst violation.
    pub worst_state: usize,
    pub checked_states: usize,
    /// Forbidden grid points, which are not belief states of the problem.
    pub excluded_states: usize,
    /// Largest `ℓ1` distance between an exact posterior and its projection.
    pub max_projection_distance: f64,
    /// Largest value difference per unit `ℓ1` between neighboring points
    /// outside the forbidden region.
    pub lipschitz_estimate: f64,
    /// `lipschitz_estimate * max_projection_distance`.
    pub projection_slack: f64,
    /// The certified statement is `V*(β) >= V(β) / time_scale`.
    pub time_scale: f64,
}

impl CertificateReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_violation <= 10.0 * tol + self.projection_slack
    }
}

/// Checks `V(β) <= min{ C_T + min_a (T^a V)(β), min_u λ C_T (1 - β(u)) }`
/// at every grid state, with `C_T` the time cost and `T^a` the same projected
/// operator as [`value_iteration`]. When it holds, `V / C_T` lower-bounds the
/// optimal cost of the unit-time-cost problem.
pub fn verify_value_certificate(
    table: &ValueTable,
    model: &ObservationModel,
    costs: &CostParams,
    privacy: &PrivacySpec,
) -> Result<CertificateReport> {
    let grid = table.grid()?;
    if table.values.len() != grid.len() * table.levels {
        return Err(Error::LengthMismatch {
            expected: grid.len() * table.levels,
            got: table.values.len(),
        });
    }
    let tr = transitions(&grid, model, costs, privacy)?;
    let c_t = costs.time_cost;
    let terminate = costs.forbidden_mode == ForbiddenMode::Terminate;
    let mut report = CertificateReport {
        max_violation: 0.0,
        worst_state: 0,
        checked_states: 0,
        excluded_states: 0,
        max_projection_distance: tr.max_projection,
        lipschitz_estimate: 0.0,
        projection_slack: 0.0,
        time_scale: c_t,
    };
    let mut worst = f64::NEG_INFINITY;
    for p in 0..grid.len() {
        let (_, conf_u) = grid.belief(p).max_confidence_useful();
        let stop_term = costs.lambda * c_t * (1.0 - conf_u).max(0.0);
        for l in 0..table.levels {
            if terminate && tr.forbidden_point[p] {
                report.excluded_states += 1;
                continue;
            }
            let (rhs, _) = backup(
                &tr,
                &table.values,
                table.levels,
                p,
                l,
                costs,
                privacy,
                stop_term,
            );
            let gap = table.value(p, l) - rhs;
            report.checked_states += 1;
            if gap > worst {
                worst = gap;
                report.worst_state = p * table.levels + l;
            }
        }
    }
    report.max_violation = worst.max(0.0);

    // neighbors: move one unit of mass between two cells, ℓ1 distance 2/r;
    // forbidden points are a jump in V, not a slope, and are skipped
    let step = 2.0 / grid.resolution() as f64;
    let mut lip: f64 = 0.0;
    let mut counts = vec![0u32; grid.n_cells()];
    for p in 0..grid.len() {
        if tr.forbidden_point[p] {
            continue;
        }
        counts.copy_from_slice(grid.counts(p));
        for from in 0..counts.len() {
            if counts[from] == 0 {
                continue;
            }
            for to in 0..counts.len() {
                if to == from {
                    continue;
                }
                counts[from] -= 1;
                counts[to] += 1;
                if let Some(q) = grid.index_of(&counts).filter(|&q| !tr.forbidden_point[q]) {
                    for l in 0..table.levels {
                        lip = lip.max((table.value(p, l) - table.value(q, l)).abs() / step);
                    }
                }
                counts[from] += 1;
                counts[to] -= 1;
            }
        }
    }
    report.lipschitz_estimate = lip;
    report.projection_slack = lip * tr.max_projection;
    Ok(report)
}

/// Deterministic policy reading actions off a [`ValueTable`].
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    table: ValueTable,
    grid: BeliefGrid,
    n_actions: usize,
}

pub fn greedy_policy(table: &ValueTable, n_actions: usize) -> Result<GreedyPolicy> {
    Ok(GreedyPolicy {
        grid: table.grid()?,
        table: table.clone(),
        n_actions,
    })
}

impl GreedyPolicy {
    pub fn action_for(&self, belief: &Belief, cumulative_mi: f64) -> Action {
        let (p, _) = self.grid.project(belief);
        match self.table.level_for(cumulative_mi) {
            Some(l) => self.table.action(p, l),
            None => Action::Stop,
        }
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }
}

impl Policy for GreedyPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_dist(&self, view: &PolicyView<'_>) -> Vec<f64> {
        let mut d = vec![0.0; self.n_actions + 1];
        match self.action_for(view.belief, view.cumulative_mi) {
            Action::Release(a) => d[a] = 1.0,
            Action::Stop => d[self.n_actions] = 1.0,
        }
        d
    }
}
