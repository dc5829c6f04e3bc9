//! Small reference instances used by the oracle comparisons and examples.

use alloc::vec::Vec;

use crate::env::{CostParams, ForbiddenMode, PrivacySpec};
use crate::model::{HypothesisSpace, ObservationModel, Prior};

/// Probability of `z = 0` per `(s, u)` cell, row-major, for each mechanism.
const DESK_Z0: [[f64; 4]; 2] = [
    // sharp on u, but leaks s
    [0.2, 0.95, 0.6, 0.05],
    // weaker on u, nearly blind to s
    [0.95, 0.35, 0.9, 0.35],
];

/// 2×2 hypotheses, two mechanisms, binary observations.
pub fn desk_model() -> ObservationModel {
    let spaces = HypothesisSpace::new(2, 2).expect("2x2 is a valid space");
    let mut probs = Vec::with_capacity(16);
    for row in DESK_Z0 {
        for p in row {
            probs.extend_from_slice(&[p, 1.0 - p]);
        }
    }
    ObservationModel::new(spaces, 2, 2, probs).expect("desk model rows are normalized")
}

pub fn desk_prior() -> Prior {
    Prior::uniform(&HypothesisSpace::new(2, 2).expect("2x2 is a valid space"))
}

/// Unit time cost, `λ = 15`, forbidden cost `10 λ`, terminate on violation.
pub fn desk_costs() -> CostParams {
    CostParams {
        lambda: 15.0,
        time_cost: 1.0,
        forbidden_cost: 150.0,
        gamma: 0.99,
        t_max: 50,
        scale_stop_cost_by_time_cost: false,
        forbidden_mode: ForbiddenMode::Terminate,
    }
}

pub fn desk_privacy() -> PrivacySpec {
    PrivacySpec::BeliefThreshold { l_b: 0.9 }
}

/// Belief-threshold grid for desk sweeps.
pub const DESK_THRESHOLDS: [f64; 3] = [0.6, 0.75, 0.9];
