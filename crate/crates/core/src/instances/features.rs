use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{InstanceError, ProblemInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenType {
    LoadP,
    LoadQ,
    Pv,
    Ev,
}

impl TokenType {
    pub const ALL: [TokenType; 4] = [
        TokenType::LoadP,
        TokenType::LoadQ,
        TokenType::Pv,
        TokenType::Ev,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Token-major model input: one row per bus load (P then Q), PV unit and EV,
/// one column per timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub token_types: Vec<TokenType>,
    pub ev_count: usize,
}

impl FeatureTensor {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Index of the first EV token.
    pub fn first_ev_row(&self) -> usize {
        self.rows - self.ev_count
    }
}

/// Per-token-type min-max statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl NormStats {
    pub fn fit<'a>(tensors: impl IntoIterator<Item = &'a FeatureTensor>) -> NormStats {
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        for t in tensors {
            for r in 0..t.rows {
                let k = t.token_types[r].index();
                for &v in t.row(r) {
                    min[k] = min[k].min(v);
                    max[k] = max[k].max(v);
                }
            }
        }
        for k in 0..4 {
            if !min[k].is_finite() {
                min[k] = 0.0;
                max[k] = 1.0;
            }
        }
        NormStats { min, max }
    }

    pub fn apply(&self, t: &mut FeatureTensor) {
        for r in 0..t.rows {
            let k = t.token_types[r].index();
            let span = self.max[k] - self.min[k];
            for v in &mut t.data[r * t.cols..(r + 1) * t.cols] {
                *v = if span > 0.0 {
                    (*v - self.min[k]) / span
                } else {
                    *v - self.min[k]
                };
            }
        }
    }
}

/// Unnormalized features of scenario `scenario`. EV rows hold the encoded
/// job node at the timestep where a job span starts and 0 elsewhere; node
/// ids map to `(rank + 1) / node_count`, so they land in (0, 1].
pub fn raw_features(
    inst: &ProblemInstance,
    scenario: usize,
) -> Result<FeatureTensor, InstanceError> {
    let n_sc = inst.scenarios.len();
    if scenario >= n_sc {
        return Err(InstanceError::ScenarioOutOfRange {
            index: scenario,
            count: n_sc,
        });
    }
    let cols = inst.horizon as usize;
    let mut data = Vec::new();
    let mut token_types = Vec::new();
    for row in &inst.loads.active {
        data.extend_from_slice(row);
        token_types.push(TokenType::LoadP);
    }
    for row in &inst.loads.reactive {
        data.extend_from_slice(row);
        token_types.push(TokenType::LoadQ);
    }
    for row in &inst.scenarios.solar[scenario] {
        data.extend_from_slice(row);
        token_types.push(TokenType::Pv);
    }
    let nodes = inst.network.transport.sorted_nodes();
    let encode =
        |n: u32| (nodes.iter().position(|&x| x == n).unwrap_or(0) + 1) as f64 / nodes.len() as f64;
    let e = inst.ev_count();
    for k in 0..e {
        let mut row = alloc::vec![0.0; cols];
        for j in inst.schedule.for_ev(k) {
            row[j.span as usize - 1] = encode(j.node);
        }
        data.extend(row);
        token_types.push(TokenType::Ev);
    }
    Ok(FeatureTensor {
        rows: token_types.len(),
        cols,
        data,
        token_types,
        ev_count: e,
    })
}

/// Normalized model input for one scenario.
pub fn encode_features(
    inst: &ProblemInstance,
    scenario: usize,
    stats: Option<&NormStats>,
) -> Result<FeatureTensor, InstanceError> {
    let stats = stats.ok_or(InstanceError::MissingNormalization)?;
    let mut t = raw_features(inst, scenario)?;
    stats.apply(&mut t);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_instance, presets, Job};

    #[test]
    fn shape_is_2b_plus_s_plus_e() {
        let inst = generate_instance(1, 2, &presets::tiny_config()).unwrap();
        let t = raw_features(&inst, 0).unwrap();
        assert_eq!((t.rows, t.cols), (2 * 3 + 1 + 2, 6));
        assert_eq!(t.first_ev_row(), 7);
        assert!(matches!(
            raw_features(&inst, 1),
            Err(InstanceError::ScenarioOutOfRange { .. })
        ));
    }

    #[test]
    fn ev_row_marks_job_span_only() {
        let mut inst = generate_instance(1, 2, &presets::paper_config()).unwrap();
        inst.schedule.jobs.retain(|j| j.ev != 0);
        inst.schedule.jobs.push(Job {
            ev: 0,
            node: 4,
            span: 3,
        });
        let t = raw_features(&inst, 0).unwrap();
        let row = t.row(t.first_ev_row());
        for (c, &v) in row.iter().enumerate() {
            if c == 2 {
                assert!((v - 4.0 / 13.0).abs() < 1e-15);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn zero_solar_stays_zero_and_missing_stats_error() {
        let mut inst = generate_instance(2, 2, &presets::tiny_config()).unwrap();
        let other = raw_features(
            &generate_instance(3, 2, &presets::tiny_config()).unwrap(),
            0,
        )
        .unwrap();
        for v in inst.scenarios.solar[0].iter_mut().flatten() {
            *v = 0.0;
        }
        assert_eq!(
            encode_features(&inst, 0, None),
            Err(InstanceError::MissingNormalization)
        );
        let zero = raw_features(&inst, 0).unwrap();
        let stats = NormStats::fit([&zero, &other]);
        assert_eq!(stats.min[TokenType::Pv.index()], 0.0);
        let t = encode_features(&inst, 0, Some(&stats)).unwrap();
        let pv = t
            .token_types
            .iter()
            .position(|&k| k == TokenType::Pv)
            .unwrap();
        assert!(t.row(pv).iter().all(|&v| v == 0.0));
        assert!(t
            .data
            .iter()
            .all(|v| v.is_finite() && *v >= -1e-12 && *v <= 1.0 + 1e-12));
    }
}
