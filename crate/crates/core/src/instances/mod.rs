//! Problem instances: one day of scenarios, loads, fleet and job schedules.

mod features;
mod generate;
pub mod presets;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::netmodel::{build_tsn, validate_network, NetError, Network, NodeId, TimeSpaceNetwork};

pub use features::{encode_features, raw_features, FeatureTensor, NormStats, TokenType};
pub use generate::{
    balanced_counts, child_seed, ev_counts, generate_batch, generate_instance,
    split_train_validation, CongestionConfig, FleetConfig, GenConfig, LoadConfig, SolarConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSet {
    pub probabilities: Vec<f64>,
    /// kW, indexed `[scenario][pv unit][timestep]`.
    pub solar: Vec<Vec<Vec<f64>>>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Demand per bus (ascending bus id) and timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    /// kW
    pub active: Vec<Vec<f64>>,
    /// kvar
    pub reactive: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ev {
    pub start: NodeId,
    /// kWh
    pub e_init: f64,
    pub e_min: f64,
    pub e_max: f64,
    /// kW
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub evs: Vec<Ev>,
    /// Charge/discharge inefficiency, shared by every EV.
    pub inefficiency: f64,
    /// $/kWh paid for charging.
    pub charge_price: f64,
    /// $/kWh earned for discharging.
    pub discharge_price: f64,
}

/// EV `ev` must be at `node` at the start of timespan `span` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub ev: usize,
    pub node: NodeId,
    pub span: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSchedule {
    pub jobs: Vec<Job>,
}

impl JobSchedule {
    pub fn for_ev(&self, ev: usize) -> impl Iterator<Item = &Job> {
        self.jobs.iter().filter(move |j| j.ev == ev)
    }
}

/// Network-wide congestion flag per timespan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongestionProfile {
    pub congested: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInstance {
    pub network: Network,
    pub horizon: u32,
    pub scenarios: ScenarioSet,
    pub loads: LoadProfile,
    pub fleet: FleetSpec,
    pub schedule: JobSchedule,
    pub congestion: CongestionProfile,
    /// Require each EV to end the day with at least its initial energy.
    #[serde(default)]
    pub terminal_energy: bool,
}

impl ProblemInstance {
    pub fn spans(&self) -> u32 {
        self.horizon - 1
    }

    /// Δt in hours.
    pub fn timestep_hours(&self) -> f64 {
        24.0 / self.horizon as f64
    }

    pub fn ev_count(&self) -> usize {
        self.fleet.evs.len()
    }

    pub fn tsn(&self) -> Result<TimeSpaceNetwork, NetError> {
        build_tsn(&self.network.transport, self.horizon)
    }

    /// Schedule pins of one EV keyed by span.
    pub fn pins(&self, ev: usize) -> BTreeMap<u32, NodeId> {
        self.schedule.for_ev(ev).map(|j| (j.span, j.node)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum InstanceError {
    #[error(transparent)]
    Network(#[from] NetError),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("EV {ev}: schedule unreachable in the time-space network")]
    Unreachable { ev: usize },
    #[error("instance generation failed after {0} attempts")]
    RetriesExhausted(u32),
    #[error("scenario index {index} out of range ({count} scenarios)")]
    ScenarioOutOfRange { index: usize, count: usize },
    #[error(
        "missing normalization statistics; fit them on the training split (run calibration) first"
    )]
    MissingNormalization,
    #[error("invalid generator config: {0}")]
    Config(String),
}

/// Checks every component invariant plus schedule reachability.
pub fn validate_instance(inst: &ProblemInstance) -> Result<(), InstanceError> {
    let bad = |m: String| Err(InstanceError::Invalid(m));
    let report = validate_network(&inst.network.transport, &inst.network.distribution);
    if !report.is_empty() {
        return Err(NetError::Invalid(report).into());
    }
    let tsn = inst.tsn()?;
    let horizon = inst.horizon as usize;
    let spans = inst.spans();
    let n_bus = inst.network.distribution.buses.len();
    let n_pv = inst.network.distribution.pv_units.len();

    let sc = &inst.scenarios;
    if sc.is_empty() || sc.solar.len() != sc.len() {
        return bad(format!(
            "{} probabilities for {} solar scenarios",
            sc.len(),
            sc.solar.len()
        ));
    }
    if sc.probabilities.iter().any(|&p| !(p >= 0.0))
        || libm::fabs(sc.probabilities.iter().sum::<f64>() - 1.0) > 1e-12
    {
        return bad(String::from(
            "scenario probabilities must be nonnegative and sum to 1",
        ));
    }
    for s in &sc.solar {
        if s.len() != n_pv
            || s.iter()
                .any(|r| r.len() != horizon || r.iter().any(|&v| !(v >= 0.0) || !v.is_finite()))
        {
            return bad(String::from(
                "solar tensor must be scenario x pv x timestep with finite values >= 0",
            ));
        }
    }
    let shape_ok = |m: &Vec<Vec<f64>>| {
        m.len() == n_bus
            && m.iter()
                .all(|r| r.len() == horizon && r.iter().all(|v| v.is_finite()))
    };
    if !shape_ok(&inst.loads.active) || !shape_ok(&inst.loads.reactive) {
        return bad(String::from("load profile must be bus x timestep"));
    }
    if inst.loads.active.iter().flatten().any(|&v| v < 0.0) {
        return bad(String::from("active demand must be >= 0"));
    }

    let f = &inst.fleet;
    if f.evs.is_empty() {
        return bad(String::from("fleet is empty"));
    }
    if !(f.inefficiency >= 0.0 && f.inefficiency < 1.0) {
        return bad(format!("inefficiency {} outside [0, 1)", f.inefficiency));
    }
    for (k, ev) in f.evs.iter().enumerate() {
        if !(ev.e_min <= ev.e_init && ev.e_init <= ev.e_max) || !(ev.p_max > 0.0) {
            return bad(format!(
                "EV {k}: need e_min <= e_init <= e_max and p_max > 0"
            ));
        }
        if !inst.network.transport.nodes.contains(&ev.start) {
            return bad(format!("EV {k}: unknown start node {}", ev.start));
        }
    }
    if inst.congestion.congested.len() != spans as usize {
        return bad(format!(
            "congestion profile has {} entries for {} spans",
            inst.congestion.congested.len(),
            spans
        ));
    }
    for j in &inst.schedule.jobs {
        if j.ev >= f.evs.len()
            || j.span < 1
            || j.span > spans
            || !inst.network.transport.nodes.contains(&j.node)
        {
            return bad(format!("malformed job {:?}", j));
        }
    }
    for k in 0..f.evs.len() {
        if inst.schedule.for_ev(k).next().is_none() {
            return bad(format!("EV {k} has no job"));
        }
        let mut pins = BTreeMap::new();
        for j in inst.schedule.for_ev(k) {
            if let Some(prev) = pins.insert(j.span, j.node) {
                if prev != j.node {
                    return Err(InstanceError::Unreachable { ev: k });
                }
            }
        }
        if tsn
            .reachable(f.evs[k].start, &inst.congestion.congested, &pins)
            .is_none()
        {
            return Err(InstanceError::Unreachable { ev: k });
        }
    }
    Ok(())
}
