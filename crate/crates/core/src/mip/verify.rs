//! Constraint checks recomputed straight from instance data. Nothing here
//! reads the rows of a built model; only the column layout is shared.

use alloc::vec::Vec;

use super::build::node_code;
use super::{instance_scenarios, Family, Mode, Tag, VarIndex, VarKey};
use crate::instances::ProblemInstance;
use crate::netmodel::{ArcKind, TsnNode};

const TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ViolationReport {
    /// Tags whose residual exceeds the tolerance.
    pub violations: Vec<(Tag, f64)>,
    pub max_residual: f64,
    /// `(expected, got)` when the solution has the wrong column count.
    pub length_mismatch: Option<(usize, usize)>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty() && self.length_mismatch.is_none()
    }

    pub fn families(&self) -> Vec<Family> {
        let mut f: Vec<Family> = self.violations.iter().map(|(t, _)| t.family).collect();
        f.sort();
        f.dedup();
        f
    }
}

struct Eval<'a> {
    out: Vec<(Tag, f64)>,
    idx: VarIndex,
    x: &'a [f64],
}

impl Eval<'_> {
    fn v(&self, key: VarKey) -> f64 {
        self.x[self.idx.at(key)]
    }

    fn eq(&mut self, family: Family, sc: u32, a: u32, b: u32, c: u32, lhs: f64, rhs: f64) {
        self.out.push((
            Tag {
                family,
                sc,
                a,
                b,
                c,
            },
            libm::fabs(lhs - rhs),
        ));
    }

    fn le(&mut self, family: Family, sc: u32, a: u32, b: u32, c: u32, lhs: f64, rhs: f64) {
        self.out.push((
            Tag {
                family,
                sc,
                a,
                b,
                c,
            },
            (lhs - rhs).max(0.0),
        ));
    }
}

/// Residual of every constraint, bound and integrality condition of the
/// model `build_model(inst, mode)` would produce, evaluated at `x`.
/// Returns an empty list when `mode` or the instance cannot be modelled or
/// `x` has the wrong length.
pub fn evaluate_constraints(inst: &ProblemInstance, mode: Mode, x: &[f64]) -> Vec<(Tag, f64)> {
    let Ok(scenarios) = instance_scenarios(inst, mode) else {
        return Vec::new();
    };
    let Ok(tsn) = inst.tsn() else {
        return Vec::new();
    };
    let tn = &inst.network.transport;
    let dn = &inst.network.distribution;
    let h = inst.horizon;
    let cs_nodes = tn.sorted_cs();
    let buses = dn.sorted_buses();
    let idx = VarIndex::new(
        scenarios.clone(),
        inst.ev_count(),
        tsn.arcs.len(),
        cs_nodes.clone(),
        buses.clone(),
        dn.dgs.len(),
        dn.lines.len(),
        h as usize,
    );
    if x.len() != idx.len() {
        return Vec::new();
    }
    let dt = 24.0 / h as f64;
    let eta = inst.fleet.inefficiency;
    let mut e = Eval {
        out: Vec::new(),
        idx,
        x,
    };

    for &sc in &scenarios {
        let s = sc as u32;
        for (k, ev) in inst.fleet.evs.iter().enumerate() {
            let kk = k as u32;
            let r = |e: &Eval, arc: usize| {
                e.v(VarKey::Route {
                    sc: s,
                    ev: kk,
                    arc: arc as u32,
                })
            };
            for span in 1..=inst.spans() {
                let jam = inst.congestion.congested[span as usize - 1];
                let mut on = 0.0;
                let mut total = 0.0;
                for a in tsn.arcs.iter().filter(|a| a.span == span) {
                    let val = r(&e, a.id);
                    total += val;
                    let allowed = if jam {
                        a.congested_enabled
                    } else {
                        a.normal_enabled
                    };
                    if allowed {
                        on += val;
                    }
                }
                e.eq(Family::TrafficState, s, kk, span, 0, on, 1.0);
                e.eq(Family::OneArc, s, kk, span, 0, total, 1.0);
            }
            let leave: f64 = tsn
                .arcs
                .iter()
                .filter(|a| a.span == 1 && a.origin == TsnNode::Physical(ev.start))
                .map(|a| r(&e, a.id))
                .sum();
            e.eq(Family::Start, s, kk, 0, 0, leave, 1.0);

            for span in 1..inst.spans() {
                for node in tsn.all_nodes() {
                    let out_next: Vec<usize> = tsn
                        .arcs
                        .iter()
                        .filter(|a| a.span == span + 1 && a.origin == node)
                        .map(|a| a.id)
                        .collect();
                    let in_now: Vec<usize> = tsn
                        .arcs
                        .iter()
                        .filter(|a| a.span == span && a.destination == node)
                        .map(|a| a.id)
                        .collect();
                    if out_next.is_empty() && in_now.is_empty() {
                        continue;
                    }
                    let o: f64 = out_next.iter().map(|&a| r(&e, a)).sum();
                    let i: f64 = in_now.iter().map(|&a| r(&e, a)).sum();
                    e.eq(Family::Conservation, s, kk, node_code(node), span, o, i);
                }
            }
            for j in inst.schedule.for_ev(k) {
                let at: f64 = tsn
                    .arcs
                    .iter()
                    .filter(|a| a.span == j.span && a.origin == TsnNode::Physical(j.node))
                    .map(|a| r(&e, a.id))
                    .sum();
                e.eq(Family::Schedule, s, kk, j.node, j.span, at, 1.0);
            }

            for &cs in &cs_nodes {
                for t in 2..=h {
                    let idle = tsn
                        .arcs
                        .iter()
                        .find(|a| {
                            a.span == t - 1
                                && a.kind == ArcKind::Idle
                                && a.origin == TsnNode::Physical(cs)
                        })
                        .map(|a| r(&e, a.id))
                        .unwrap_or(0.0);
                    let busy = e.v(VarKey::Charge {
                        sc: s,
                        ev: kk,
                        cs,
                        t,
                    }) + e.v(VarKey::Discharge {
                        sc: s,
                        ev: kk,
                        cs,
                        t,
                    });
                    e.le(Family::IdleAtStation, s, kk, cs, t - 1, busy, idle);
                }
                for t in 1..=h {
                    let pc = e.v(VarKey::ChargeP {
                        sc: s,
                        ev: kk,
                        cs,
                        t,
                    });
                    let pd = e.v(VarKey::DischargeP {
                        sc: s,
                        ev: kk,
                        cs,
                        t,
                    });
                    let ic = e.v(VarKey::Charge {
                        sc: s,
                        ev: kk,
                        cs,
                        t,
                    });
                    let id = e.v(VarKey::Discharge {
                        sc: s,
                        ev: kk,
                        cs,
                        t,
                    });
                    e.le(Family::ChargeLimit, s, kk, cs, t, pc, ev.p_max * ic);
                    e.le(Family::DischargeLimit, s, kk, cs, t, pd, ev.p_max * id);
                }
            }
            for t in 2..=h {
                let draw: f64 = tsn
                    .arcs
                    .iter()
                    .filter(|a| a.span == t - 1 && a.kind != ArcKind::Idle)
                    .map(|a| a.energy * r(&e, a.id))
                    .sum();
                e.eq(
                    Family::MoveDraw,
                    s,
                    kk,
                    t,
                    0,
                    e.v(VarKey::MoveP { sc: s, ev: kk, t }),
                    draw,
                );
            }
            e.eq(
                Family::InitialEnergy,
                s,
                kk,
                0,
                0,
                e.v(VarKey::Energy {
                    sc: s,
                    ev: kk,
                    t: 1,
                }),
                ev.e_init,
            );
            for t in 2..=h {
                let charged: f64 = cs_nodes
                    .iter()
                    .map(|&cs| {
                        e.v(VarKey::ChargeP {
                            sc: s,
                            ev: kk,
                            cs,
                            t,
                        })
                    })
                    .sum();
                let discharged: f64 = cs_nodes
                    .iter()
                    .map(|&cs| {
                        e.v(VarKey::DischargeP {
                            sc: s,
                            ev: kk,
                            cs,
                            t,
                        })
                    })
                    .sum();
                let moved = e.v(VarKey::MoveP { sc: s, ev: kk, t });
                let expected = e.v(VarKey::Energy {
                    sc: s,
                    ev: kk,
                    t: t - 1,
                }) + dt * (1.0 - eta) * charged
                    - dt * (1.0 + eta) * (discharged + moved);
                e.eq(
                    Family::EnergyBalance,
                    s,
                    kk,
                    t,
                    0,
                    e.v(VarKey::Energy { sc: s, ev: kk, t }),
                    expected,
                );
            }
            if inst.terminal_energy {
                e.le(
                    Family::TerminalEnergy,
                    s,
                    kk,
                    0,
                    0,
                    ev.e_init,
                    e.v(VarKey::Energy {
                        sc: s,
                        ev: kk,
                        t: h,
                    }),
                );
            }
        }

        for (bi, &bus) in buses.iter().enumerate() {
            for t in 1..=h {
                let ti = t as usize - 1;
                let mut p_in = 0.0;
                let mut q_in = 0.0;
                for (g, _) in dn.dgs.iter().enumerate().filter(|(_, d)| d.bus == bus) {
                    p_in += e.v(VarKey::GenP {
                        sc: s,
                        dg: g as u32,
                        t,
                    });
                    q_in += e.v(VarKey::GenQ {
                        sc: s,
                        dg: g as u32,
                        t,
                    });
                }
                for m in dn
                    .cs_bus_map
                    .iter()
                    .filter(|m| m.bus == bus && cs_nodes.contains(&m.node))
                {
                    for kk in 0..inst.ev_count() as u32 {
                        p_in += e.v(VarKey::DischargeP {
                            sc: s,
                            ev: kk,
                            cs: m.node,
                            t,
                        }) - e.v(VarKey::ChargeP {
                            sc: s,
                            ev: kk,
                            cs: m.node,
                            t,
                        });
                    }
                }
                for (l, line) in dn.lines.iter().enumerate() {
                    let (fp, fq) = (
                        e.v(VarKey::FlowP {
                            sc: s,
                            line: l as u32,
                            t,
                        }),
                        e.v(VarKey::FlowQ {
                            sc: s,
                            line: l as u32,
                            t,
                        }),
                    );
                    if line.to_bus == bus {
                        p_in += fp;
                        q_in += fq;
                    }
                    if line.from_bus == bus {
                        p_in -= fp;
                        q_in -= fq;
                    }
                }
                for (u, pv) in dn.pv_units.iter().enumerate() {
                    if pv.bus == bus {
                        p_in += inst.scenarios.solar[sc][u][ti];
                    }
                }
                e.eq(
                    Family::ActiveBalance,
                    s,
                    bus,
                    t,
                    0,
                    p_in,
                    inst.loads.active[bi][ti],
                );
                e.eq(
                    Family::ReactiveBalance,
                    s,
                    bus,
                    t,
                    0,
                    q_in,
                    inst.loads.reactive[bi][ti],
                );
            }
        }
        for (l, line) in dn.lines.iter().enumerate() {
            let l = l as u32;
            for t in 1..=h {
                let up = e.v(VarKey::Voltage {
                    sc: s,
                    bus: line.from_bus,
                    t,
                });
                let down = e.v(VarKey::Voltage {
                    sc: s,
                    bus: line.to_bus,
                    t,
                });
                let drop = 2.0
                    * (line.resistance * e.v(VarKey::FlowP { sc: s, line: l, t })
                        + line.reactance * e.v(VarKey::FlowQ { sc: s, line: l, t }))
                    / dn.base_kva;
                e.eq(Family::VoltageDrop, s, l, t, 0, down, up - drop);
            }
        }
    }

    let max_move = tsn.arcs.iter().fold(0.0f64, |m, a| m.max(a.energy));
    for c in 0..x.len() {
        let key = e.idx.key(c);
        let (lo, hi, binary) = match key {
            VarKey::Route { .. } => (0.0, 1.0, true),
            VarKey::Charge { t: 1, .. } | VarKey::Discharge { t: 1, .. } => (0.0, 0.0, true),
            VarKey::Charge { .. } | VarKey::Discharge { .. } => (0.0, 1.0, true),
            VarKey::GenP { dg, .. } => {
                (dn.dgs[dg as usize].p_min, dn.dgs[dg as usize].p_max, false)
            }
            VarKey::GenQ { dg, .. } => {
                (dn.dgs[dg as usize].q_min, dn.dgs[dg as usize].q_max, false)
            }
            VarKey::ChargeP { ev, .. } | VarKey::DischargeP { ev, .. } => {
                (0.0, inst.fleet.evs[ev as usize].p_max, false)
            }
            VarKey::MoveP { t: 1, .. } => (0.0, 0.0, false),
            VarKey::MoveP { .. } => (0.0, max_move, false),
            VarKey::Energy { ev, .. } => (
                inst.fleet.evs[ev as usize].e_min,
                inst.fleet.evs[ev as usize].e_max,
                false,
            ),
            VarKey::FlowP { line, .. } | VarKey::FlowQ { line, .. } => (
                -dn.lines[line as usize].flow_limit,
                dn.lines[line as usize].flow_limit,
                false,
            ),
            VarKey::Voltage { bus, .. } if bus == dn.root_bus => {
                (dn.v_root_sq, dn.v_root_sq, false)
            }
            VarKey::Voltage { .. } => (dn.v_min_sq, dn.v_max_sq, false),
        };
        let v = x[c];
        let tag = |family| Tag {
            family,
            sc: 0,
            a: c as u32,
            b: 0,
            c: 0,
        };
        e.out
            .push((tag(Family::Bound), (lo - v).max(v - hi).max(0.0)));
        if binary {
            e.out
                .push((tag(Family::Integrality), libm::fabs(v - libm::round(v))));
        }
    }
    e.out
}

pub fn verify_solution(inst: &ProblemInstance, mode: Mode, x: &[f64]) -> ViolationReport {
    let all = evaluate_constraints(inst, mode, x);
    if all.is_empty() {
        let expected = crate::mip::build_model(inst, mode)
            .map(|m| m.n_cols())
            .unwrap_or(0);
        return ViolationReport {
            violations: Vec::new(),
            max_residual: f64::INFINITY,
            length_mismatch: Some((expected, x.len())),
        };
    }
    let max_residual = all.iter().fold(0.0f64, |m, (_, r)| m.max(*r));
    let violations = all.into_iter().filter(|(_, r)| *r > TOLERANCE).collect();
    ViolationReport {
        violations,
        max_residual,
        length_mismatch: None,
    }
}
