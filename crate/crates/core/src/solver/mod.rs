//! Exact solving: LP relaxations by bounded primal simplex, best-bound
//! branch and bound over the binary columns, and an enumeration oracle.

mod brute;
mod simplex;

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_solve, enumerate_routes, BruteForceError};

use crate::mip::MipModel;

/// Source of wall-clock seconds. The core has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that never advances; time limits never trigger under it.
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branching {
    MostFractional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeOrder {
    BestBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub mip_gap: f64,
    pub node_limit: u64,
    /// Seconds; `None` for no limit.
    pub time_limit: Option<f64>,
    pub branching: Branching,
    pub node_order: NodeOrder,
    pub workers: usize,
    pub lp_iteration_limit: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            feasibility_tol: 1e-7,
            integrality_tol: 1e-6,
            mip_gap: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            branching: Branching::MostFractional,
            node_order: NodeOrder::BestBound,
            workers: 1,
            lp_iteration_limit: 200_000,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.feasibility_tol > 0.0 && self.integrality_tol > 0.0 && self.mip_gap >= 0.0) {
            return Err(String::from("tolerances must be positive"));
        }
        if self.workers == 0 {
            return Err(String::from("worker count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The simplex gave up; the message says why.
    Numerical(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: u64,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    TimeLimit,
    Numerical,
}

impl MipStatus {
    pub fn hit_limit(self) -> bool {
        matches!(self, MipStatus::NodeLimit | MipStatus::TimeLimit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipResult {
    pub status: MipStatus,
    /// Objective of the incumbent; `+inf` when there is none.
    pub objective: f64,
    pub values: Vec<f64>,
    pub best_bound: f64,
    /// Nodes whose LP was solved, the root included.
    pub nodes: u64,
    /// Nodes that produced children.
    pub branched: u64,
    pub lp_iterations: u64,
    pub wall_time: f64,
    /// Global lower bound after each processed node.
    pub bound_trace: Vec<f64>,
}

impl MipResult {
    pub fn has_solution(&self) -> bool {
        self.objective.is_finite() && !self.values.is_empty()
    }
}

/// One line of the verbose branch-and-bound log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeLog {
    pub id: u64,
    pub bound: f64,
    pub incumbent: f64,
    pub depth: u32,
}

impl core::fmt::Display for NodeLog {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "node {} bound {:.9e} incumbent {:.9e} depth {}",
            self.id, self.bound, self.incumbent, self.depth
        )
    }
}

fn lp_with_bounds(
    model: &MipModel,
    lower: &[f64],
    upper: &[f64],
    cfg: &SolveConfig,
) -> (LpStatus, f64, Vec<f64>, u64) {
    let lp = simplex::Lp {
        objective: &model.objective,
        rows: &model.rows,
        lower,
        upper,
    };
    let sol = simplex::solve(&lp, cfg.feasibility_tol, cfg.lp_iteration_limit);
    let status = match sol.outcome {
        simplex::Outcome::Optimal => LpStatus::Optimal,
        simplex::Outcome::Infeasible => LpStatus::Infeasible,
        simplex::Outcome::Unbounded => LpStatus::Unbounded,
        simplex::Outcome::Stalled(m) => LpStatus::Numerical(m),
    };
    let obj = if status == LpStatus::Optimal {
        model.objective_value(&sol.x)
    } else {
        f64::INFINITY
    };
    (status, obj, sol.x, sol.iterations)
}

/// Solves the LP relaxation: binary columns range over their bounds.
pub fn solve_lp(model: &MipModel, cfg: &SolveConfig) -> LpResult {
    solve_lp_timed(model, cfg, &NoClock)
}

pub fn solve_lp_timed(model: &MipModel, cfg: &SolveConfig, clock: &dyn Clock) -> LpResult {
    let t0 = clock.now();
    let (status, objective, values, iterations) =
        lp_with_bounds(model, &model.lower, &model.upper, cfg);
    LpResult {
        status,
        objective,
        values,
        iterations,
        wall_time: clock.now() - t0,
    }
}

struct Node {
    id: u64,
    depth: u32,
    bound: f64,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: smaller bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

pub fn solve_mip(model: &MipModel, cfg: &SolveConfig) -> MipResult {
    solve_mip_with(model, cfg, &NoClock, &mut |_| {})
}

/// Best-bound branch and bound. `log` receives one entry per processed node.
/// Worker counts above one are accepted and explored sequentially.
pub fn solve_mip_with(
    model: &MipModel,
    cfg: &SolveConfig,
    clock: &dyn Clock,
    log: &mut dyn FnMut(&NodeLog),
) -> MipResult {
    let t0 = clock.now();
    let binaries: Vec<usize> = model.binary_cols().collect();
    let mut result = MipResult {
        status: MipStatus::Infeasible,
        objective: f64::INFINITY,
        values: Vec::new(),
        best_bound: f64::NEG_INFINITY,
        nodes: 0,
        branched: 0,
        lp_iterations: 0,
        wall_time: 0.0,
        bound_trace: Vec::new(),
    };
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        depth: 0,
        bound: f64::NEG_INFINITY,
        fixes: Vec::new(),
    });
    let mut next_id = 1u64;
    let mut lower = model.lower.clone();
    let mut upper = model.upper.clone();
    let mut limit = None;
    let mut numerical = false;

    let gap_closed =
        |bound: f64, inc: f64| inc.is_finite() && inc - bound <= cfg.mip_gap * inc.abs().max(1.0);

    while let Some(node) = heap.pop() {
        if gap_closed(node.bound, result.objective) {
            heap.clear();
            break;
        }
        if result.nodes >= cfg.node_limit {
            heap.push(node);
            limit = Some(MipStatus::NodeLimit);
            break;
        }
        if let Some(tl) = cfg.time_limit {
            if clock.now() - t0 >= tl {
                heap.push(node);
                limit = Some(MipStatus::TimeLimit);
                break;
            }
        }
        lower.copy_from_slice(&model.lower);
        upper.copy_from_slice(&model.upper);
        for &(c, v) in &node.fixes {
            lower[c] = v;
            upper[c] = v;
        }
        let (status, obj, x, iters) = lp_with_bounds(model, &lower, &upper, cfg);
        result.nodes += 1;
        result.lp_iterations += iters;
        let node_bound = obj.max(node.bound);
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => {
                result.status = MipStatus::Unbounded;
                result.wall_time = clock.now() - t0;
                return result;
            }
            LpStatus::Numerical(_) => numerical = true,
        }
        if status == LpStatus::Optimal && !gap_closed(node_bound, result.objective) {
            let mut pick: Option<(usize, f64)> = None;
            for &c in &binaries {
                let frac = libm::fabs(x[c] - libm::round(x[c]));
                if frac > cfg.integrality_tol {
                    let dist = libm::fabs(x[c] - 0.5);
                    if pick.is_none_or(|(_, d)| dist < d) {
                        pick = Some((c, dist));
                    }
                }
            }
            match pick {
                None => {
                    let (cand, cand_obj, extra) =
                        polish(model, &lower, &upper, &binaries, &x, obj, cfg);
                    result.lp_iterations += extra;
                    if cand_obj < result.objective {
                        result.objective = cand_obj;
                        result.values = cand;
                    }
                }
                Some((c, _)) => {
                    result.branched += 1;
                    for v in [0.0, 1.0] {
                        let mut fixes = node.fixes.clone();
                        fixes.push((c, v));
                        heap.push(Node {
                            id: next_id,
                            depth: node.depth + 1,
                            bound: node_bound,
                            fixes,
                        });
                        next_id += 1;
                    }
                }
            }
        }
        let open = heap.peek().map_or(f64::INFINITY, |n| n.bound);
        let global = open.min(result.objective);
        let global = match result.bound_trace.last() {
            Some(&prev) if prev > global => prev,
            _ => global,
        };
        result.bound_trace.push(global);
        log(&NodeLog {
            id: node.id,
            bound: node_bound,
            incumbent: result.objective,
            depth: node.depth,
        });
    }

    let open = heap.peek().map_or(f64::INFINITY, |n| n.bound);
    result.best_bound = open.min(result.objective);
    if let Some(&last) = result.bound_trace.last() {
        result.best_bound = result.best_bound.max(last).min(result.objective);
    }
    result.status = match limit {
        Some(s) => s,
        None if result.objective.is_finite() => MipStatus::Optimal,
        None if numerical => MipStatus::Numerical,
        None => MipStatus::Infeasible,
    };
    result.wall_time = clock.now() - t0;
    result
}

/// Rounds the binaries of an integral LP point and re-solves the continuous
/// part so the incumbent carries exact 0/1 values.
fn polish(
    model: &MipModel,
    lower: &[f64],
    upper: &[f64],
    binaries: &[usize],
    x: &[f64],
    obj: f64,
    cfg: &SolveConfig,
) -> (Vec<f64>, f64, u64) {
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for &c in binaries {
        let v = libm::round(x[c]);
        lo[c] = v;
        hi[c] = v;
    }
    let (status, pobj, px, iters) = lp_with_bounds(model, &lo, &hi, cfg);
    if status == LpStatus::Optimal {
        (px, pobj, iters)
    } else {
        let mut y = x.to_vec();
        for &c in binaries {
            y[c] = libm::round(y[c]);
        }
        (y, obj, iters)
    }
}

/// LP over the continuous columns once the listed columns are pinned.
pub fn fixed_lp(model: &MipModel, fixed: &[(usize, f64)], cfg: &SolveConfig) -> LpResult {
    let mut lo = model.lower.clone();
    let mut hi = model.upper.clone();
    for &(c, v) in fixed {
        lo[c] = v;
        hi[c] = v;
    }
    let (status, objective, values, iterations) = lp_with_bounds(model, &lo, &hi, cfg);
    LpResult {
        status,
        objective,
        values,
        iterations,
        wall_time: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{Family, Mode, ModelMeta, Row, Sense, Tag, VarIndex};
    use alloc::vec;

    fn toy(
        objective: Vec<f64>,
        rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        binary: Vec<bool>,
    ) -> MipModel {
        let n = objective.len();
        let tag = Tag {
            family: Family::Bound,
            sc: 0,
            a: 0,
            b: 0,
            c: 0,
        };
        MipModel {
            objective,
            rows: rows
                .into_iter()
                .map(|(coefs, sense, rhs)| Row {
                    coefs,
                    sense,
                    rhs,
                    tag,
                })
                .collect(),
            lower,
            upper,
            binary,
            index: VarIndex::new(vec![0], 0, 0, vec![], vec![], 0, 0, n),
            meta: ModelMeta {
                instance_hash: String::new(),
                mode: Mode::Deterministic(0),
            },
        }
    }

    #[test]
    fn lower_bound_row() {
        let m = toy(
            vec![1.0],
            vec![(vec![(0, -1.0)], Sense::Le, -3.0)],
            vec![0.0],
            vec![10.0],
            vec![false],
        );
        let r = solve_lp(&m, &SolveConfig::default());
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let m = toy(
            vec![1.0, 1.0],
            vec![(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 1.0)],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![true, true],
        );
        assert_eq!(
            solve_lp(&m, &SolveConfig::default()).status,
            LpStatus::Infeasible
        );
        assert_eq!(
            solve_mip(&m, &SolveConfig::default()).status,
            MipStatus::Infeasible
        );
    }

    #[test]
    fn classic_lp() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6).
        let m = toy(
            vec![-3.0, -5.0],
            vec![
                (vec![(0, 1.0)], Sense::Le, 4.0),
                (vec![(1, 2.0)], Sense::Le, 12.0),
                (vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
            ],
            vec![0.0, 0.0],
            vec![f64::INFINITY, f64::INFINITY],
            vec![false, false],
        );
        let r = solve_lp(&m, &SolveConfig::default());
        assert!((r.objective + 36.0).abs() < 1e-9);
        assert!((r.values[0] - 2.0).abs() < 1e-9 && (r.values[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_free_columns() {
        // min x - y with x + y = 2, x - y >= -4 (as -x + y <= 4), y free below 10.
        let m = toy(
            vec![1.0, -1.0],
            vec![
                (vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0),
                (vec![(0, -1.0), (1, 1.0)], Sense::Le, 4.0),
            ],
            vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![f64::INFINITY, 10.0],
            vec![false, false],
        );
        let r = solve_lp(&m, &SolveConfig::default());
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 4.0).abs() < 1e-9, "{:?}", r);
    }

    #[test]
    fn unbounded_ray() {
        let m = toy(
            vec![-1.0, 0.0],
            vec![(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0)],
            vec![0.0, 0.0],
            vec![f64::INFINITY; 2],
            vec![false; 2],
        );
        assert_eq!(
            solve_lp(&m, &SolveConfig::default()).status,
            LpStatus::Unbounded
        );
    }

    #[test]
    fn knapsack_branch_and_bound() {
        // max 5a + 4b + 3c under three capacity rows, checked against enumeration.
        let w = [[2.0, 3.0, 1.0], [4.0, 1.0, 2.0], [3.0, 4.0, 2.0]];
        let cap = [5.0, 11.0, 8.0];
        let val = [5.0, 4.0, 3.0];
        let rows = (0..3)
            .map(|i| ((0..3).map(|j| (j, w[i][j])).collect(), Sense::Le, cap[i]))
            .collect();
        let m = toy(
            val.iter().map(|v| -v).collect(),
            rows,
            vec![0.0; 3],
            vec![1.0; 3],
            vec![true; 3],
        );
        let mut best = f64::INFINITY;
        for mask in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|j| f64::from((mask >> j) & 1)).collect();
            if (0..3).all(|i| (0..3).map(|j| w[i][j] * x[j]).sum::<f64>() <= cap[i]) {
                best = best.min(-(0..3).map(|j| val[j] * x[j]).sum::<f64>());
            }
        }
        let r = solve_mip(&m, &SolveConfig::default());
        assert_eq!(r.status, MipStatus::Optimal);
        assert!((r.objective - best).abs() < 1e-9);
        assert!(r.bound_trace.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn fractional_knapsack_needs_branching() {
        // max 8a + 11b + 6c + 4d s.t. 5a + 7b + 4c + 3d <= 14.
        let m = toy(
            vec![-8.0, -11.0, -6.0, -4.0],
            vec![(
                vec![(0, 5.0), (1, 7.0), (2, 4.0), (3, 3.0)],
                Sense::Le,
                14.0,
            )],
            vec![0.0; 4],
            vec![1.0; 4],
            vec![true; 4],
        );
        let r = solve_mip(&m, &SolveConfig::default());
        assert!((r.objective + 21.0).abs() < 1e-9, "{:?}", r.objective);
        assert!(r.branched > 0);
        let lp = solve_lp(&m, &SolveConfig::default());
        assert!(lp.objective <= r.objective + 1e-9);
    }
}
