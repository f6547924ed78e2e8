//! Sparse standard-form MIP for the joint routing and scheduling problem.
//!
//! Columns are laid out by [`VarIndex`]: one contiguous binary block
//! (scenario-major, then EV-major, then routing bits in canonical arc order,
//! charge bits by (station, timestep), discharge bits by (station, timestep)),
//! followed by one block of continuous columns per scenario.
//!
//! Every row carries a [`Tag`] naming the constraint it instantiates, so the
//! independent verifier in [`verify`] can be compared row by row.

mod build;
mod verify;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use build::build_model;
pub use verify::{evaluate_constraints, verify_solution, ViolationReport};

use crate::instances::ProblemInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Stochastic,
    Deterministic(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarKey {
    Route { sc: u32, ev: u32, arc: u32 },
    Charge { sc: u32, ev: u32, cs: u32, t: u32 },
    Discharge { sc: u32, ev: u32, cs: u32, t: u32 },
    GenP { sc: u32, dg: u32, t: u32 },
    GenQ { sc: u32, dg: u32, t: u32 },
    ChargeP { sc: u32, ev: u32, cs: u32, t: u32 },
    DischargeP { sc: u32, ev: u32, cs: u32, t: u32 },
    MoveP { sc: u32, ev: u32, t: u32 },
    Energy { sc: u32, ev: u32, t: u32 },
    FlowP { sc: u32, line: u32, t: u32 },
    FlowQ { sc: u32, line: u32, t: u32 },
    Voltage { sc: u32, bus: u32, t: u32 },
}

impl VarKey {
    /// Column name used by the LP export. `sc` is the scenario index of the
    /// instance, `cs`/`bus` are node/bus ids, `dg`/`line` are list positions,
    /// `t` and spans are 1-based.
    pub fn name(&self) -> String {
        match *self {
            VarKey::Route { sc, ev, arc } => format!("I_sc{sc}_k{ev}_a{arc}"),
            VarKey::Charge { sc, ev, cs, t } => format!("Ic_sc{sc}_k{ev}_i{cs}_t{t}"),
            VarKey::Discharge { sc, ev, cs, t } => format!("Id_sc{sc}_k{ev}_i{cs}_t{t}"),
            VarKey::GenP { sc, dg, t } => format!("Pg_sc{sc}_u{dg}_t{t}"),
            VarKey::GenQ { sc, dg, t } => format!("Qg_sc{sc}_u{dg}_t{t}"),
            VarKey::ChargeP { sc, ev, cs, t } => format!("Pc_sc{sc}_k{ev}_i{cs}_t{t}"),
            VarKey::DischargeP { sc, ev, cs, t } => format!("Pd_sc{sc}_k{ev}_i{cs}_t{t}"),
            VarKey::MoveP { sc, ev, t } => format!("Pm_sc{sc}_k{ev}_t{t}"),
            VarKey::Energy { sc, ev, t } => format!("E_sc{sc}_k{ev}_t{t}"),
            VarKey::FlowP { sc, line, t } => format!("Pl_sc{sc}_l{line}_t{t}"),
            VarKey::FlowQ { sc, line, t } => format!("Ql_sc{sc}_l{line}_t{t}"),
            VarKey::Voltage { sc, bus, t } => format!("v_sc{sc}_b{bus}_t{t}"),
        }
    }
}

/// Bijective registry between [`VarKey`]s and column ordinals.
#[derive(Clone, Debug, PartialEq)]
pub struct VarIndex {
    /// Instance scenario index of each model scenario slot.
    pub scenarios: Vec<usize>,
    pub evs: usize,
    pub arcs: usize,
    pub cs_nodes: Vec<u32>,
    pub buses: Vec<u32>,
    pub dgs: usize,
    pub lines: usize,
    pub horizon: usize,
    keys: Vec<VarKey>,
    lookup: BTreeMap<VarKey, usize>,
}

impl VarIndex {
    pub fn new(
        scenarios: Vec<usize>,
        evs: usize,
        arcs: usize,
        cs_nodes: Vec<u32>,
        buses: Vec<u32>,
        dgs: usize,
        lines: usize,
        horizon: usize,
    ) -> VarIndex {
        let mut keys = Vec::new();
        let h = horizon as u32;
        for &sc in &scenarios {
            let sc = sc as u32;
            for ev in 0..evs as u32 {
                keys.extend((0..arcs as u32).map(|arc| VarKey::Route { sc, ev, arc }));
                for &cs in &cs_nodes {
                    keys.extend((1..=h).map(|t| VarKey::Charge { sc, ev, cs, t }));
                }
                for &cs in &cs_nodes {
                    keys.extend((1..=h).map(|t| VarKey::Discharge { sc, ev, cs, t }));
                }
            }
        }
        for &sc in &scenarios {
            let sc = sc as u32;
            for dg in 0..dgs as u32 {
                keys.extend((1..=h).map(|t| VarKey::GenP { sc, dg, t }));
            }
            for dg in 0..dgs as u32 {
                keys.extend((1..=h).map(|t| VarKey::GenQ { sc, dg, t }));
            }
            for ev in 0..evs as u32 {
                for &cs in &cs_nodes {
                    keys.extend((1..=h).map(|t| VarKey::ChargeP { sc, ev, cs, t }));
                }
            }
            for ev in 0..evs as u32 {
                for &cs in &cs_nodes {
                    keys.extend((1..=h).map(|t| VarKey::DischargeP { sc, ev, cs, t }));
                }
            }
            for ev in 0..evs as u32 {
                keys.extend((1..=h).map(|t| VarKey::MoveP { sc, ev, t }));
            }
            for ev in 0..evs as u32 {
                keys.extend((1..=h).map(|t| VarKey::Energy { sc, ev, t }));
            }
            for line in 0..lines as u32 {
                keys.extend((1..=h).map(|t| VarKey::FlowP { sc, line, t }));
            }
            for line in 0..lines as u32 {
                keys.extend((1..=h).map(|t| VarKey::FlowQ { sc, line, t }));
            }
            for &bus in &buses {
                keys.extend((1..=h).map(|t| VarKey::Voltage { sc, bus, t }));
            }
        }
        let lookup = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        VarIndex {
            scenarios,
            evs,
            arcs,
            cs_nodes,
            buses,
            dgs,
            lines,
            horizon,
            keys,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Binary columns owned by one EV in one scenario.
    pub fn n_per_ev(&self) -> usize {
        self.arcs + 2 * self.cs_nodes.len() * self.horizon
    }

    pub fn n_binary(&self) -> usize {
        self.scenarios.len() * self.evs * self.n_per_ev()
    }

    pub fn n_continuous_per_scenario(&self) -> usize {
        (self.len() - self.n_binary()) / self.scenarios.len().max(1)
    }

    pub fn col(&self, key: VarKey) -> Option<usize> {
        self.lookup.get(&key).copied()
    }

    /// Column of `key`; panics on keys outside the registry.
    pub fn at(&self, key: VarKey) -> usize {
        match self.lookup.get(&key) {
            Some(&c) => c,
            None => panic!("unregistered column {:?}", key),
        }
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    /// Extracts the columns of model scenario slot `slot`, in the layout of
    /// the matching deterministic model.
    pub fn scenario_slice(&self, values: &[f64], slot: usize) -> Vec<f64> {
        let nb = self.evs * self.n_per_ev();
        let nc = self.n_continuous_per_scenario();
        let mut out = Vec::with_capacity(nb + nc);
        out.extend_from_slice(&values[slot * nb..(slot + 1) * nb]);
        let base = self.n_binary() + slot * nc;
        out.extend_from_slice(&values[base..base + nc]);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
}

/// Constraint families, named after what they enforce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Exactly one arc enabled under the span's traffic state.
    TrafficState,
    /// Exactly one arc per EV per span.
    OneArc,
    /// EV departs from its start node in the first span.
    Start,
    Conservation,
    Schedule,
    /// Charging or discharging only while idling at the station.
    IdleAtStation,
    MoveDraw,
    ChargeLimit,
    DischargeLimit,
    InitialEnergy,
    EnergyBalance,
    TerminalEnergy,
    ActiveBalance,
    ReactiveBalance,
    VoltageDrop,
    /// Column bound; `a` holds the column.
    Bound,
    /// Binary column away from {0, 1}; `a` holds the column.
    Integrality,
}

/// Identifies one constraint instance. Field meaning depends on the family
/// (EV, span or timestep, node or bus); `sc` is the instance scenario index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub family: Family,
    pub sc: u32,
    pub a: u32,
    pub b: u32,
    pub c: u32,
}

impl Tag {
    pub fn name(&self) -> String {
        format!(
            "{:?}_sc{}_{}_{}_{}",
            self.family, self.sc, self.a, self.b, self.c
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: Tag,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(c, a)| a * x[c]).sum()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Eq => libm::fabs(lhs - self.rhs),
            Sense::Le => (lhs - self.rhs).max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    pub instance_hash: String,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MipModel {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
    pub index: VarIndex,
    pub meta: ModelMeta,
}

impl MipModel {
    pub fn n_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Little-endian dump of every number in the model, for hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut f = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        for c in 0..self.n_cols() {
            f(self.objective[c]);
            f(self.lower[c]);
            f(self.upper[c]);
            f(if self.binary[c] { 1.0 } else { 0.0 });
        }
        for r in &self.rows {
            f(r.coefs.len() as f64);
            for &(c, a) in &r.coefs {
                f(c as f64);
                f(a);
            }
            f(if r.sense == Sense::Eq { 1.0 } else { 0.0 });
            f(r.rhs);
        }
        out
    }

    pub fn binary_cols(&self) -> impl Iterator<Item = usize> + '_ {
        self.binary
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    /// Row and bound residuals keyed by tag, including satisfied ones.
    pub fn residuals(&self, x: &[f64]) -> Vec<(Tag, f64)> {
        let mut out: Vec<(Tag, f64)> = self.rows.iter().map(|r| (r.tag, r.residual(x))).collect();
        for c in 0..self.n_cols() {
            let v = x[c];
            let r = (self.lower[c] - v).max(v - self.upper[c]).max(0.0);
            out.push((
                Tag {
                    family: Family::Bound,
                    sc: 0,
                    a: c as u32,
                    b: 0,
                    c: 0,
                },
                r,
            ));
        }
        out
    }
}

/// Binary columns clamped to fixed values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialAssignment {
    pub fixed: BTreeMap<usize, bool>,
}

impl PartialAssignment {
    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    /// Fixes every binary column to the rounded value in `x`.
    pub fn from_values(model: &MipModel, x: &[f64]) -> PartialAssignment {
        PartialAssignment {
            fixed: model.binary_cols().map(|c| (c, x[c] > 0.5)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MipError {
    #[error("model build failed: {0}")]
    Build(String),
    #[error("column {0} is not binary")]
    NotBinary(usize),
    #[error("column {0} out of range")]
    OutOfRange(usize),
    #[error(transparent)]
    Network(#[from] crate::netmodel::NetError),
}

/// Copy of `model` with each fixed column's bounds clamped.
pub fn apply_fixings(model: &MipModel, pa: &PartialAssignment) -> Result<MipModel, MipError> {
    for &c in pa.fixed.keys() {
        if c >= model.n_cols() {
            return Err(MipError::OutOfRange(c));
        }
        if !model.binary[c] {
            return Err(MipError::NotBinary(c));
        }
    }
    let mut out = model.clone();
    for (&c, &v) in &pa.fixed {
        let v = if v { 1.0 } else { 0.0 };
        out.lower[c] = v;
        out.upper[c] = v;
    }
    Ok(out)
}

/// Labels of a deterministic solve: the rounded binary block.
pub fn binary_labels(model: &MipModel, x: &[f64]) -> Vec<u8> {
    model.binary_cols().map(|c| u8::from(x[c] > 0.5)).collect()
}

pub(crate) fn instance_scenarios(
    inst: &ProblemInstance,
    mode: Mode,
) -> Result<Vec<usize>, MipError> {
    match mode {
        Mode::Stochastic => Ok((0..inst.scenarios.len()).collect()),
        Mode::Deterministic(sc) if sc < inst.scenarios.len() => Ok(alloc::vec![sc]),
        Mode::Deterministic(sc) => Err(MipError::Build(format!("scenario {sc} out of range"))),
    }
}
