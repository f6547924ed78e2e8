//! Exhaustive oracle: every route allowed by the time-space network and the
//! schedule, times every charge/discharge pattern on that route, each scored
//! by an LP over the continuous columns.

use alloc::vec;
use alloc::vec::Vec;

use super::{fixed_lp, LpStatus, MipResult, MipStatus, SolveConfig};
use crate::instances::ProblemInstance;
use crate::mip::{build_model, MipError, MipModel, Mode, VarKey};
use crate::netmodel::{ArcKind, TimeSpaceNetwork, TsnNode};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BruteForceError {
    #[error("enumeration needs {needed} assignments, cap is {cap}")]
    CapExceeded { needed: u128, cap: u64 },
    #[error(transparent)]
    Model(#[from] MipError),
}

/// Arc ids (one per span) of every feasible route of EV `ev`.
pub fn enumerate_routes(
    inst: &ProblemInstance,
    tsn: &TimeSpaceNetwork,
    ev: usize,
) -> Vec<Vec<usize>> {
    let pins = inst.pins(ev);
    let mut out = Vec::new();
    let mut path = Vec::new();
    fn dfs(
        tsn: &TimeSpaceNetwork,
        jam: &[bool],
        pins: &alloc::collections::BTreeMap<u32, u32>,
        node: TsnNode,
        span: u32,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if span > tsn.spans {
            out.push(path.clone());
            return;
        }
        if let Some(&p) = pins.get(&span) {
            if node != TsnNode::Physical(p) {
                return;
            }
        }
        let congested = jam[span as usize - 1];
        for a in tsn.span_arcs(span) {
            let usable = if congested {
                a.congested_enabled
            } else {
                a.normal_enabled
            };
            if a.origin == node && usable {
                path.push(a.id);
                dfs(tsn, jam, pins, a.destination, span + 1, path, out);
                path.pop();
            }
        }
    }
    dfs(
        tsn,
        &inst.congestion.congested,
        &pins,
        TsnNode::Physical(inst.fleet.evs[ev].start),
        1,
        &mut path,
        &mut out,
    );
    out
}

/// (station, timestep) slots where a route idles at a charging station.
fn station_slots(tsn: &TimeSpaceNetwork, route: &[usize], cs: &[u32]) -> Vec<(u32, u32)> {
    route
        .iter()
        .filter_map(|&a| {
            let arc = &tsn.arcs[a];
            match (arc.kind, arc.origin) {
                (ArcKind::Idle, TsnNode::Physical(n)) if cs.contains(&n) => Some((n, arc.span + 1)),
                _ => None,
            }
        })
        .collect()
}

struct Choice {
    fixes: Vec<(usize, f64)>,
}

fn ev_choices(
    model: &MipModel,
    tsn: &TimeSpaceNetwork,
    sc: u32,
    ev: usize,
    routes: &[Vec<usize>],
    cs: &[u32],
) -> Vec<Choice> {
    let idx = &model.index;
    let e = ev as u32;
    let mut out = Vec::new();
    for route in routes {
        let slots = station_slots(tsn, route, cs);
        let patterns = 3usize.pow(slots.len() as u32);
        for p in 0..patterns {
            let mut fixes = Vec::new();
            for arc in 0..tsn.arcs.len() {
                let on = route.contains(&arc);
                fixes.push((
                    idx.at(VarKey::Route {
                        sc,
                        ev: e,
                        arc: arc as u32,
                    }),
                    if on { 1.0 } else { 0.0 },
                ));
            }
            let mut code = p;
            let mut status = vec![0usize; slots.len()];
            for s in status.iter_mut() {
                *s = code % 3;
                code /= 3;
            }
            for &c in cs {
                for t in 1..=tsn.horizon {
                    let slot = slots.iter().position(|&(n, tt)| n == c && tt == t);
                    let st = slot.map_or(0, |i| status[i]);
                    fixes.push((
                        idx.at(VarKey::Charge {
                            sc,
                            ev: e,
                            cs: c,
                            t,
                        }),
                        if st == 1 { 1.0 } else { 0.0 },
                    ));
                    fixes.push((
                        idx.at(VarKey::Discharge {
                            sc,
                            ev: e,
                            cs: c,
                            t,
                        }),
                        if st == 2 { 1.0 } else { 0.0 },
                    ));
                }
            }
            out.push(Choice { fixes });
        }
    }
    out
}

fn solve_scenario(
    inst: &ProblemInstance,
    sc: usize,
    cap: u64,
    cfg: &SolveConfig,
) -> Result<(MipModel, MipResult), BruteForceError> {
    let model = build_model(inst, Mode::Deterministic(sc))?;
    let tsn = inst.tsn().map_err(MipError::from)?;
    let cs = inst.network.transport.sorted_cs();
    let mut per_ev = Vec::new();
    let mut needed: u128 = 1;
    for k in 0..inst.ev_count() {
        let routes = enumerate_routes(inst, &tsn, k);
        let count: u128 = routes
            .iter()
            .map(|r| 3u128.pow(station_slots(&tsn, r, &cs).len() as u32))
            .sum();
        needed = needed.saturating_mul(count);
        if needed > cap as u128 {
            return Err(BruteForceError::CapExceeded { needed, cap });
        }
        per_ev.push(routes);
    }
    let choices: Vec<Vec<Choice>> = per_ev
        .iter()
        .enumerate()
        .map(|(k, r)| ev_choices(&model, &tsn, sc as u32, k, r, &cs))
        .collect();
    let mut result = MipResult {
        status: MipStatus::Infeasible,
        objective: f64::INFINITY,
        values: Vec::new(),
        best_bound: f64::INFINITY,
        nodes: 0,
        branched: 0,
        lp_iterations: 0,
        wall_time: 0.0,
        bound_trace: Vec::new(),
    };
    if choices.iter().any(|c| c.is_empty()) {
        return Ok((model, result));
    }
    let mut odo = vec![0usize; choices.len()];
    let mut fixes = Vec::new();
    loop {
        fixes.clear();
        for (k, &i) in odo.iter().enumerate() {
            fixes.extend_from_slice(&choices[k][i].fixes);
        }
        let lp = fixed_lp(&model, &fixes, cfg);
        result.nodes += 1;
        result.lp_iterations += lp.iterations;
        if lp.status == LpStatus::Optimal && lp.objective < result.objective {
            result.objective = lp.objective;
            result.values = lp.values;
        }
        let mut k = 0;
        loop {
            if k == odo.len() {
                if result.objective.is_finite() {
                    result.status = MipStatus::Optimal;
                    result.best_bound = result.objective;
                }
                return Ok((model, result));
            }
            odo[k] += 1;
            if odo[k] < choices[k].len() {
                break;
            }
            odo[k] = 0;
            k += 1;
        }
    }
}

/// Exact optimum by enumeration; refuses when more than `cap` binary
/// assignments would be needed (per scenario). Scenarios share no columns,
/// so the stochastic optimum is assembled from per-scenario optima.
pub fn brute_force_solve(
    inst: &ProblemInstance,
    mode: Mode,
    cap: u64,
    cfg: &SolveConfig,
) -> Result<MipResult, BruteForceError> {
    match mode {
        Mode::Deterministic(sc) => {
            if sc >= inst.scenarios.len() {
                return Err(MipError::Build(alloc::format!("scenario {sc} out of range")).into());
            }
            Ok(solve_scenario(inst, sc, cap, cfg)?.1)
        }
        Mode::Stochastic => {
            let full = build_model(inst, Mode::Stochastic)?;
            let mut values = vec![0.0; full.n_cols()];
            let mut total = MipResult {
                status: MipStatus::Optimal,
                objective: 0.0,
                values: Vec::new(),
                best_bound: 0.0,
                nodes: 0,
                branched: 0,
                lp_iterations: 0,
                wall_time: 0.0,
                bound_trace: Vec::new(),
            };
            for sc in 0..inst.scenarios.len() {
                let (m, r) = solve_scenario(inst, sc, cap, cfg)?;
                total.nodes += r.nodes;
                total.lp_iterations += r.lp_iterations;
                if r.status != MipStatus::Optimal {
                    total.status = r.status;
                    total.objective = f64::INFINITY;
                    total.best_bound = f64::INFINITY;
                    return Ok(total);
                }
                for (c, &v) in r.values.iter().enumerate() {
                    values[full.index.at(m.index.key(c))] = v;
                }
            }
            total.objective = full.objective_value(&values);
            total.best_bound = total.objective;
            total.values = values;
            Ok(total)
        }
    }
}
