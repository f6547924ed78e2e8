use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    instance_scenarios, Family, MipError, MipModel, Mode, ModelMeta, Row, Sense, Tag, VarIndex,
    VarKey,
};
use crate::instances::ProblemInstance;
use crate::netmodel::TsnNode;

pub(crate) fn node_code(n: TsnNode) -> u32 {
    match n {
        TsnNode::Physical(id) => id,
        TsnNode::Virtual(v) => 0x8000_0000 | v,
    }
}

struct Builder {
    rows: Vec<Row>,
}

impl Builder {
    fn push(
        &mut self,
        family: Family,
        sc: usize,
        abc: (u32, u32, u32),
        coefs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        let tag = Tag {
            family,
            sc: sc as u32,
            a: abc.0,
            b: abc.1,
            c: abc.2,
        };
        self.rows.push(Row {
            coefs,
            sense,
            rhs,
            tag,
        });
    }
}

pub fn build_model(inst: &ProblemInstance, mode: Mode) -> Result<MipModel, MipError> {
    let scenarios = instance_scenarios(inst, mode)?;
    let tsn = inst.tsn()?;
    let tn = &inst.network.transport;
    let dn = &inst.network.distribution;
    let horizon = inst.horizon as usize;
    let spans = inst.spans();
    let evs = inst.ev_count();
    if inst.congestion.congested.len() != spans as usize {
        return Err(MipError::Build(format!(
            "congestion profile length {} != {}",
            inst.congestion.congested.len(),
            spans
        )));
    }
    for j in &inst.schedule.jobs {
        if j.ev >= evs || j.span < 1 || j.span > spans || !tn.nodes.contains(&j.node) {
            return Err(MipError::Build(format!("malformed job {:?}", j)));
        }
    }
    let cs_nodes = tn.sorted_cs();
    let buses = dn.sorted_buses();
    let mut cs_bus = Vec::new();
    for &c in &cs_nodes {
        match dn.bus_of_cs(c) {
            Some(b) => cs_bus.push(b),
            None => return Err(MipError::Build(format!("station {c} has no bus"))),
        }
    }
    let h = inst.horizon;
    let idx = VarIndex::new(
        scenarios.clone(),
        evs,
        tsn.arcs.len(),
        cs_nodes.clone(),
        buses.clone(),
        dn.dgs.len(),
        dn.lines.len(),
        horizon,
    );
    let n = idx.len();
    let mut objective = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut binary = vec![false; n];
    let max_move = tsn.arcs.iter().map(|a| a.energy).fold(0.0, f64::max);
    let dt = inst.timestep_hours();
    let eta = inst.fleet.inefficiency;

    for (c, key) in idx.keys().iter().enumerate() {
        let (lo, hi, bin) = match *key {
            VarKey::Route { .. } => (0.0, 1.0, true),
            VarKey::Charge { t, .. } | VarKey::Discharge { t, .. } => {
                (0.0, if t == 1 { 0.0 } else { 1.0 }, true)
            }
            VarKey::GenP { dg, .. } => {
                (dn.dgs[dg as usize].p_min, dn.dgs[dg as usize].p_max, false)
            }
            VarKey::GenQ { dg, .. } => {
                (dn.dgs[dg as usize].q_min, dn.dgs[dg as usize].q_max, false)
            }
            VarKey::ChargeP { ev, .. } | VarKey::DischargeP { ev, .. } => {
                (0.0, inst.fleet.evs[ev as usize].p_max, false)
            }
            VarKey::MoveP { t, .. } => (0.0, if t == 1 { 0.0 } else { max_move }, false),
            VarKey::Energy { ev, .. } => (
                inst.fleet.evs[ev as usize].e_min,
                inst.fleet.evs[ev as usize].e_max,
                false,
            ),
            VarKey::FlowP { line, .. } | VarKey::FlowQ { line, .. } => {
                let s = dn.lines[line as usize].flow_limit;
                (-s, s, false)
            }
            VarKey::Voltage { bus, .. } if bus == dn.root_bus => {
                (dn.v_root_sq, dn.v_root_sq, false)
            }
            VarKey::Voltage { .. } => (dn.v_min_sq, dn.v_max_sq, false),
        };
        lower[c] = lo;
        upper[c] = hi;
        binary[c] = bin;
    }

    let mut b = Builder { rows: Vec::new() };
    for &sc in &scenarios {
        let weight = match mode {
            Mode::Stochastic => inst.scenarios.probabilities[sc],
            Mode::Deterministic(_) => 1.0,
        };
        let s32 = sc as u32;
        let route = |ev: usize, arc: usize| {
            idx.at(VarKey::Route {
                sc: s32,
                ev: ev as u32,
                arc: arc as u32,
            })
        };

        for k in 0..evs {
            let ev = k as u32;
            for span in 1..=spans {
                let jam = inst.congestion.congested[(span - 1) as usize];
                let enabled = tsn
                    .enabled(span, jam)
                    .into_iter()
                    .map(|a| (route(k, a), 1.0))
                    .collect();
                b.push(
                    Family::TrafficState,
                    sc,
                    (ev, span, 0),
                    enabled,
                    Sense::Eq,
                    1.0,
                );
                let all = tsn
                    .span_arcs(span)
                    .iter()
                    .map(|a| (route(k, a.id), 1.0))
                    .collect();
                b.push(Family::OneArc, sc, (ev, span, 0), all, Sense::Eq, 1.0);
            }
            let start = TsnNode::Physical(inst.fleet.evs[k].start);
            let first = tsn
                .departures(start, 1)
                .into_iter()
                .map(|a| (route(k, a), 1.0))
                .collect();
            b.push(Family::Start, sc, (ev, 0, 0), first, Sense::Eq, 1.0);
            for pair in &tsn.conservation_pairs {
                let mut coefs: Vec<(usize, f64)> =
                    pair.from.iter().map(|&a| (route(k, a), 1.0)).collect();
                coefs.extend(pair.to.iter().map(|&a| (route(k, a), -1.0)));
                b.push(
                    Family::Conservation,
                    sc,
                    (ev, node_code(pair.node), pair.span),
                    coefs,
                    Sense::Eq,
                    0.0,
                );
            }
            for j in inst.schedule.for_ev(k) {
                let coefs = tsn
                    .departures(TsnNode::Physical(j.node), j.span)
                    .into_iter()
                    .map(|a| (route(k, a), 1.0))
                    .collect();
                b.push(
                    Family::Schedule,
                    sc,
                    (ev, j.node, j.span),
                    coefs,
                    Sense::Eq,
                    1.0,
                );
            }

            let ev_data = &inst.fleet.evs[k];
            for &cs in &cs_nodes {
                for t in 2..=h {
                    let ic = idx.at(VarKey::Charge { sc: s32, ev, cs, t });
                    let id = idx.at(VarKey::Discharge { sc: s32, ev, cs, t });
                    let idle = tsn.idle_cs_arcs[&cs][(t - 2) as usize];
                    b.push(
                        Family::IdleAtStation,
                        sc,
                        (ev, cs, t - 1),
                        vec![(ic, 1.0), (id, 1.0), (route(k, idle), -1.0)],
                        Sense::Le,
                        0.0,
                    );
                }
                for t in 1..=h {
                    let ic = idx.at(VarKey::Charge { sc: s32, ev, cs, t });
                    let id = idx.at(VarKey::Discharge { sc: s32, ev, cs, t });
                    let pc = idx.at(VarKey::ChargeP { sc: s32, ev, cs, t });
                    let pd = idx.at(VarKey::DischargeP { sc: s32, ev, cs, t });
                    b.push(
                        Family::ChargeLimit,
                        sc,
                        (ev, cs, t),
                        vec![(pc, 1.0), (ic, -ev_data.p_max)],
                        Sense::Le,
                        0.0,
                    );
                    b.push(
                        Family::DischargeLimit,
                        sc,
                        (ev, cs, t),
                        vec![(pd, 1.0), (id, -ev_data.p_max)],
                        Sense::Le,
                        0.0,
                    );
                }
            }
            for t in 2..=h {
                let pm = idx.at(VarKey::MoveP { sc: s32, ev, t });
                let mut coefs = vec![(pm, 1.0)];
                for a in tsn.span_arcs(t - 1) {
                    if a.is_travel() && a.energy != 0.0 {
                        coefs.push((route(k, a.id), -a.energy));
                    }
                }
                b.push(Family::MoveDraw, sc, (ev, t, 0), coefs, Sense::Eq, 0.0);
            }
            let e1 = idx.at(VarKey::Energy { sc: s32, ev, t: 1 });
            b.push(
                Family::InitialEnergy,
                sc,
                (ev, 0, 0),
                vec![(e1, 1.0)],
                Sense::Eq,
                ev_data.e_init,
            );
            for t in 2..=h {
                let mut coefs = vec![
                    (idx.at(VarKey::Energy { sc: s32, ev, t }), 1.0),
                    (
                        idx.at(VarKey::Energy {
                            sc: s32,
                            ev,
                            t: t - 1,
                        }),
                        -1.0,
                    ),
                ];
                for &cs in &cs_nodes {
                    coefs.push((
                        idx.at(VarKey::ChargeP { sc: s32, ev, cs, t }),
                        -dt * (1.0 - eta),
                    ));
                    coefs.push((
                        idx.at(VarKey::DischargeP { sc: s32, ev, cs, t }),
                        dt * (1.0 + eta),
                    ));
                }
                coefs.push((idx.at(VarKey::MoveP { sc: s32, ev, t }), dt * (1.0 + eta)));
                b.push(Family::EnergyBalance, sc, (ev, t, 0), coefs, Sense::Eq, 0.0);
            }
            if inst.terminal_energy {
                let et = idx.at(VarKey::Energy { sc: s32, ev, t: h });
                b.push(
                    Family::TerminalEnergy,
                    sc,
                    (ev, 0, 0),
                    vec![(et, -1.0)],
                    Sense::Le,
                    -ev_data.e_init,
                );
            }
        }

        let pv_row = &inst.scenarios.solar[sc];
        for (bi, &bus) in buses.iter().enumerate() {
            for t in 1..=h {
                let ti = (t - 1) as usize;
                let mut p = Vec::new();
                let mut q = Vec::new();
                for (g, dg) in dn.dgs.iter().enumerate() {
                    if dg.bus == bus {
                        p.push((
                            idx.at(VarKey::GenP {
                                sc: s32,
                                dg: g as u32,
                                t,
                            }),
                            1.0,
                        ));
                        q.push((
                            idx.at(VarKey::GenQ {
                                sc: s32,
                                dg: g as u32,
                                t,
                            }),
                            1.0,
                        ));
                    }
                }
                for (ci, &cs) in cs_nodes.iter().enumerate() {
                    if cs_bus[ci] != bus {
                        continue;
                    }
                    for k in 0..evs as u32 {
                        p.push((
                            idx.at(VarKey::DischargeP {
                                sc: s32,
                                ev: k,
                                cs,
                                t,
                            }),
                            1.0,
                        ));
                        p.push((
                            idx.at(VarKey::ChargeP {
                                sc: s32,
                                ev: k,
                                cs,
                                t,
                            }),
                            -1.0,
                        ));
                    }
                }
                for (l, line) in dn.lines.iter().enumerate() {
                    let l = l as u32;
                    let sign = if line.to_bus == bus {
                        1.0
                    } else if line.from_bus == bus {
                        -1.0
                    } else {
                        continue;
                    };
                    p.push((
                        idx.at(VarKey::FlowP {
                            sc: s32,
                            line: l,
                            t,
                        }),
                        sign,
                    ));
                    q.push((
                        idx.at(VarKey::FlowQ {
                            sc: s32,
                            line: l,
                            t,
                        }),
                        sign,
                    ));
                }
                let solar: f64 = dn
                    .pv_units
                    .iter()
                    .zip(pv_row)
                    .filter(|(u, _)| u.bus == bus)
                    .map(|(_, r)| r[ti])
                    .sum();
                let rhs_p = inst.loads.active[bi][ti] - solar;
                b.push(Family::ActiveBalance, sc, (bus, t, 0), p, Sense::Eq, rhs_p);
                b.push(
                    Family::ReactiveBalance,
                    sc,
                    (bus, t, 0),
                    q,
                    Sense::Eq,
                    inst.loads.reactive[bi][ti],
                );
            }
        }
        for (l, line) in dn.lines.iter().enumerate() {
            let l32 = l as u32;
            for t in 1..=h {
                let coefs = vec![
                    (
                        idx.at(VarKey::Voltage {
                            sc: s32,
                            bus: line.to_bus,
                            t,
                        }),
                        1.0,
                    ),
                    (
                        idx.at(VarKey::Voltage {
                            sc: s32,
                            bus: line.from_bus,
                            t,
                        }),
                        -1.0,
                    ),
                    (
                        idx.at(VarKey::FlowP {
                            sc: s32,
                            line: l32,
                            t,
                        }),
                        2.0 * line.resistance / dn.base_kva,
                    ),
                    (
                        idx.at(VarKey::FlowQ {
                            sc: s32,
                            line: l32,
                            t,
                        }),
                        2.0 * line.reactance / dn.base_kva,
                    ),
                ];
                b.push(Family::VoltageDrop, sc, (l32, t, 0), coefs, Sense::Eq, 0.0);
            }
        }

        for t in 1..=h {
            for (g, dg) in dn.dgs.iter().enumerate() {
                objective[idx.at(VarKey::GenP {
                    sc: s32,
                    dg: g as u32,
                    t,
                })] = weight * dt * dg.fuel_cost;
            }
            for k in 0..evs as u32 {
                for &cs in &cs_nodes {
                    objective[idx.at(VarKey::ChargeP {
                        sc: s32,
                        ev: k,
                        cs,
                        t,
                    })] = weight * dt * inst.fleet.charge_price;
                    objective[idx.at(VarKey::DischargeP {
                        sc: s32,
                        ev: k,
                        cs,
                        t,
                    })] = -weight * dt * inst.fleet.discharge_price;
                }
            }
        }
    }

    Ok(MipModel {
        objective,
        rows: b.rows,
        lower,
        upper,
        binary,
        index: idx,
        meta: ModelMeta {
            instance_hash: crate::hash::instance_hash(inst),
            mode,
        },
    })
}
