//! Coupled transportation / distribution network descriptions and the
//! time-expanded routing graph built on top of them.

mod tsn;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use tsn::{
    build_tsn, ArcGroups, ArcKind, ArcQuery, ConservationPair, TimeSpaceNetwork, TsnArc, TsnNode,
    VirtualNode,
};

pub type NodeId = u32;
pub type BusId = u32;

/// A directed road segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub origin: NodeId,
    pub destination: NodeId,
    pub normal_travel_spans: u32,
    pub congested_travel_spans: u32,
    /// Power drawn while traversing the edge, kW.
    pub move_energy: f64,
}

impl Edge {
    pub fn is_congestible(&self) -> bool {
        self.congested_travel_spans > self.normal_travel_spans
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportNetwork {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    /// Nodes hosting a charging station.
    pub cs_nodes: Vec<NodeId>,
}

impl TransportNetwork {
    /// Node ids in ascending order.
    pub fn sorted_nodes(&self) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.nodes.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Charging-station nodes in ascending order.
    pub fn sorted_cs(&self) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self.cs_nodes.iter().copied().collect();
        set.into_iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// p.u.
    pub resistance: f64,
    /// p.u.
    pub reactance: f64,
    /// kVA; applied as a box bound on both the active and reactive flow.
    pub flow_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// $/kWh
    pub fuel_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvUnit {
    pub bus: BusId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsBus {
    pub node: NodeId,
    pub bus: BusId,
}

fn default_v_root_sq() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionNetwork {
    pub buses: Vec<BusId>,
    pub lines: Vec<Line>,
    pub dgs: Vec<Generator>,
    pub pv_units: Vec<PvUnit>,
    pub cs_bus_map: Vec<CsBus>,
    pub v_min_sq: f64,
    pub v_max_sq: f64,
    pub root_bus: BusId,
    /// Power base for the per-unit line impedances, kVA.
    pub base_kva: f64,
    /// Squared voltage held at the substation bus, p.u.².
    #[serde(default = "default_v_root_sq")]
    pub v_root_sq: f64,
}

impl DistributionNetwork {
    /// Bus ids in ascending order.
    pub fn sorted_buses(&self) -> Vec<BusId> {
        let set: BTreeSet<BusId> = self.buses.iter().copied().collect();
        set.into_iter().collect()
    }

    pub fn bus_of_cs(&self, node: NodeId) -> Option<BusId> {
        self.cs_bus_map
            .iter()
            .find(|m| m.node == node)
            .map(|m| m.bus)
    }
}

/// Both halves of the coupled system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub transport: TransportNetwork,
    pub distribution: DistributionNetwork,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    DuplicateNode,
    UnknownEndpoint,
    TravelSpans,
    MoveEnergy,
    DuplicateEdge,
    SelfLoop,
    CsNotANode,
    DuplicateBus,
    UnknownBus,
    NotRadial,
    CsMapping,
    GeneratorBounds,
    VoltageBounds,
    LineData,
    Base,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            f.write_str(&v.message)?;
        }
        Ok(())
    }
}

/// Structural checks on the road network alone.
pub fn validate_transport(tn: &TransportNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    use ViolationKind::*;

    let mut nodes = BTreeSet::new();
    for &n in &tn.nodes {
        if !nodes.insert(n) {
            report.push(DuplicateNode, format!("duplicate transport node {n}"));
        }
    }
    let mut seen_edges = BTreeSet::new();
    for e in &tn.edges {
        let tag = format!("edge {}->{}", e.origin, e.destination);
        if !nodes.contains(&e.origin) || !nodes.contains(&e.destination) {
            report.push(UnknownEndpoint, format!("{tag} has an undeclared endpoint"));
        }
        if e.origin == e.destination {
            report.push(SelfLoop, format!("{tag} is a self loop"));
        }
        if e.normal_travel_spans < 1 || e.congested_travel_spans < e.normal_travel_spans {
            report.push(
                TravelSpans,
                format!(
                    "{tag}: need congested ({}) >= normal ({}) >= 1 travel spans",
                    e.congested_travel_spans, e.normal_travel_spans
                ),
            );
        }
        if !(e.move_energy >= 0.0) || !e.move_energy.is_finite() {
            report.push(
                MoveEnergy,
                format!(
                    "{tag}: move energy {} must be finite and >= 0",
                    e.move_energy
                ),
            );
        }
        if !seen_edges.insert((e.origin, e.destination)) {
            report.push(DuplicateEdge, format!("{tag} declared twice"));
        }
    }
    for &c in &tn.cs_nodes {
        if !nodes.contains(&c) {
            report.push(
                CsNotANode,
                format!("charging station {c} is not a transport node"),
            );
        }
    }
    report
}

/// Checks every structural invariant of both networks and lists the ones that fail.
pub fn validate_network(tn: &TransportNetwork, dn: &DistributionNetwork) -> ValidationReport {
    let mut report = validate_transport(tn);
    use ViolationKind::*;

    let mut buses = BTreeSet::new();
    for &b in &dn.buses {
        if !buses.insert(b) {
            report.push(DuplicateBus, format!("duplicate bus {b}"));
        }
    }
    if !buses.contains(&dn.root_bus) {
        report.push(
            UnknownBus,
            format!("root bus {} is not declared", dn.root_bus),
        );
    }
    let mut lines_ok = true;
    for l in &dn.lines {
        if !buses.contains(&l.from_bus) || !buses.contains(&l.to_bus) {
            report.push(
                UnknownBus,
                format!(
                    "line {}-{} references an undeclared bus",
                    l.from_bus, l.to_bus
                ),
            );
            lines_ok = false;
        }
        if !(l.resistance >= 0.0 && l.reactance >= 0.0 && l.flow_limit > 0.0) {
            report.push(
                LineData,
                format!(
                    "line {}-{} needs r, x >= 0 and flow limit > 0",
                    l.from_bus, l.to_bus
                ),
            );
        }
    }
    if lines_ok && buses.contains(&dn.root_bus) && !is_radial(dn, &buses) {
        report.push(
            NotRadial,
            String::from(
                "distribution network is not radial (lines must form a tree spanning every bus)",
            ),
        );
    }
    for g in &dn.dgs {
        if !buses.contains(&g.bus) {
            report.push(UnknownBus, format!("generator at undeclared bus {}", g.bus));
        }
        if !(g.p_min <= g.p_max) || !(g.q_min <= g.q_max) {
            report.push(
                GeneratorBounds,
                format!("generator at bus {} has inverted bounds", g.bus),
            );
        }
    }
    for pv in &dn.pv_units {
        if !buses.contains(&pv.bus) {
            report.push(UnknownBus, format!("PV unit at undeclared bus {}", pv.bus));
        }
    }
    if !(dn.v_min_sq < dn.v_max_sq) {
        report.push(
            VoltageBounds,
            format!(
                "v_min_sq {} must be below v_max_sq {}",
                dn.v_min_sq, dn.v_max_sq
            ),
        );
    }
    if !(dn.v_root_sq >= dn.v_min_sq && dn.v_root_sq <= dn.v_max_sq) {
        report.push(
            VoltageBounds,
            format!("root voltage {} outside the voltage bounds", dn.v_root_sq),
        );
    }
    if !(dn.base_kva > 0.0) {
        report.push(Base, format!("base_kva {} must be positive", dn.base_kva));
    }

    let mut mapped: BTreeMap<NodeId, usize> = BTreeMap::new();
    for m in &dn.cs_bus_map {
        *mapped.entry(m.node).or_default() += 1;
        if !buses.contains(&m.bus) {
            report.push(
                CsMapping,
                format!(
                    "charging station {} mapped to nonexistent bus {}",
                    m.node, m.bus
                ),
            );
        }
        if !tn.cs_nodes.contains(&m.node) {
            report.push(
                CsMapping,
                format!("bus mapping for {} which is not a charging station", m.node),
            );
        }
    }
    for &c in &tn.cs_nodes {
        match mapped.get(&c).copied().unwrap_or(0) {
            1 => {}
            0 => report.push(
                CsMapping,
                format!("charging station {c} has no bus mapping"),
            ),
            n => report.push(CsMapping, format!("charging station {c} mapped {n} times")),
        }
    }
    report
}

fn is_radial(dn: &DistributionNetwork, buses: &BTreeSet<BusId>) -> bool {
    if dn.lines.len() + 1 != buses.len() {
        return false;
    }
    let mut adj: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
    for l in &dn.lines {
        adj.entry(l.from_bus).or_default().push(l.to_bus);
        adj.entry(l.to_bus).or_default().push(l.from_bus);
    }
    let mut seen = BTreeSet::new();
    let mut stack = alloc::vec![dn.root_bus];
    while let Some(b) = stack.pop() {
        if !seen.insert(b) {
            continue;
        }
        if let Some(next) = adj.get(&b) {
            stack.extend(next.iter().copied().filter(|n| !seen.contains(n)));
        }
    }
    seen.len() == buses.len()
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("invalid horizon {0}: need at least 2 timesteps")]
    InvalidHorizon(u32),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid network: {0}")]
    Invalid(ValidationReport),
}
