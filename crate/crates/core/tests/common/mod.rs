#![allow(dead_code)]

use aput_core::{HypothesisSpace, ObservationModel, Prior};
use proptest::prelude::*;

/// Normalizes consecutive chunks of `raw` into observation rows.
pub fn model_from_raw(n: usize, m: usize, na: usize, nz: usize, raw: &[f64]) -> ObservationModel {
    let mut probs = raw.to_vec();
    for row in probs.chunks_mut(nz) {
        let t: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= t);
    }
    ObservationModel::new(HypothesisSpace::new(n, m).unwrap(), na, nz, probs).unwrap()
}

pub fn prior_from_raw(n: usize, m: usize, raw: &[f64]) -> Prior {
    let t: f64 = raw.iter().sum();
    Prior::new(n, m, raw.iter().map(|p| p / t).collect()).unwrap()
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub model: ObservationModel,
    pub prior: Prior,
}

/// Random instance with `N, M <= 3`, up to 3 actions and `|Z| <= 5`.
pub fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=3, 2usize..=3, 1usize..=3, 2usize..=5).prop_flat_map(|(n, m, na, nz)| {
        (
            proptest::collection::vec(0.01f64..1.0, n * m * na * nz),
            proptest::collection::vec(0.01f64..1.0, n * m),
        )
            .prop_map(move |(raw, p)| Instance {
                model: model_from_raw(n, m, na, nz, &raw),
                prior: prior_from_raw(n, m, &p),
            })
    })
}

/// Mutual information of a joint table `p[s][k]` from scratch.
pub fn table_mi(p: &[Vec<f64>]) -> f64 {
    let ps: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let k = p[0].len();
    let pk: Vec<f64> = (0..k).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (s, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (ps[s] * pk[j])).ln();
            }
        }
    }
    mi
}
