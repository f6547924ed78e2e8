//! Dense-tableau bounded-variable primal simplex.
//!
//! The LP handed in is `min c x` over sparse rows (`<=` or `=`) with column
//! bounds. Fixed columns are substituted out and empty rows checked before
//! the tableau is formed. Columns are shifted to `[0, u]`, rows and columns
//! are equilibrated once, and infeasibility is resolved by a phase with one
//! artificial per row that lacks a usable slack.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mip::{Row, Sense};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_LIMIT: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    Stalled(String),
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub outcome: Outcome,
    pub x: Vec<f64>,
    pub iterations: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Basic,
    Lower,
    Upper,
}

/// How an internal column maps back onto an original one:
/// `x[orig] += sign * y * scale`.
#[derive(Clone, Copy)]
struct ColMap {
    orig: usize,
    sign: f64,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Scaled constraint matrix with artificials, `m x (n + m)`, row-major.
    a: Vec<f64>,
    b: Vec<f64>,
    t: Vec<f64>,
    beta: Vec<f64>,
    d: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    blocked: Vec<bool>,
    iterations: u64,
    max_iterations: u64,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n + self.m
    }

    fn refactor(&mut self) -> Result<(), String> {
        let m = self.m;
        let w = self.width();
        // Gauss-Jordan on [B | A_full] in place of the tableau.
        let mut bmat = vec![0.0; m * m];
        for i in 0..m {
            for (k, &col) in self.basis.iter().enumerate() {
                bmat[i * m + k] = self.a[i * w + col];
            }
        }
        let mut t = self.a.clone();
        let mut rhs = self.b.clone();
        for j in 0..w {
            if self.state[j] == State::Upper {
                let u = self.ub[j];
                for i in 0..m {
                    rhs[i] -= self.a[i * w + j] * u;
                }
            }
        }
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let mut best = k;
            let mut best_v = libm::fabs(bmat[perm[k] * m + k]);
            for (p, &row) in perm.iter().enumerate().skip(k + 1) {
                let v = libm::fabs(bmat[row * m + k]);
                if v > best_v {
                    best = p;
                    best_v = v;
                }
            }
            if best_v < 1e-12 {
                return Err(String::from("singular basis"));
            }
            perm.swap(k, best);
            let pr = perm[k];
            let inv = 1.0 / bmat[pr * m + k];
            for c in 0..m {
                bmat[pr * m + c] *= inv;
            }
            for c in 0..w {
                t[pr * w + c] *= inv;
            }
            rhs[pr] *= inv;
            for &row in perm.iter() {
                if row == pr {
                    continue;
                }
                let f = bmat[row * m + k];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    bmat[row * m + c] -= f * bmat[pr * m + c];
                }
                for c in 0..w {
                    t[row * w + c] -= f * t[pr * w + c];
                }
                rhs[row] -= f * rhs[pr];
            }
        }
        // Row k of the result belongs to basis position k.
        let mut out = vec![0.0; m * w];
        let mut beta = vec![0.0; m];
        for k in 0..m {
            let pr = perm[k];
            out[k * w..(k + 1) * w].copy_from_slice(&t[pr * w..(pr + 1) * w]);
            beta[k] = rhs[pr];
        }
        self.t = out;
        self.beta = beta;
        self.recompute_costs();
        Ok(())
    }

    fn recompute_costs(&mut self) {
        let w = self.width();
        let mut d = self.cost.clone();
        for (i, &bc) in self.basis.iter().enumerate() {
            let cb = self.cost[bc];
            if cb == 0.0 {
                continue;
            }
            for j in 0..w {
                d[j] -= cb * self.t[i * w + j];
            }
        }
        for &bc in &self.basis {
            d[bc] = 0.0;
        }
        self.d = d;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width();
        let p = self.t[r * w + q];
        let inv = 1.0 / p;
        for c in 0..w {
            self.t[r * w + c] *= inv;
        }
        self.t[r * w + q] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[q];
            if f != 0.0 {
                for c in 0..w {
                    row[c] -= f * prow[c];
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for c in 0..w {
                self.d[c] -= f * prow[c];
            }
            self.d[q] = 0.0;
        }
    }

    /// Runs primal simplex with the current cost vector until optimal.
    fn run(&mut self) -> Result<Outcome, String> {
        let w = self.width();
        let mut since_refactor = 0usize;
        let mut degenerate = 0usize;
        let mut verified = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Ok(Outcome::Stalled(String::from("iteration limit reached")));
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let bland = degenerate > DEGENERATE_LIMIT;
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..w {
                if self.blocked[j] || self.ub[j] <= 0.0 {
                    continue;
                }
                let score = match self.state[j] {
                    State::Basic => continue,
                    State::Lower => -self.d[j],
                    State::Upper => self.d[j],
                };
                if score > COST_TOL && (enter.is_none() || (!bland && score > best)) {
                    enter = Some(j);
                    best = score;
                    if bland {
                        break;
                    }
                }
            }
            let Some(q) = enter else {
                if verified {
                    return Ok(Outcome::Optimal);
                }
                self.refactor()?;
                since_refactor = 0;
                verified = true;
                continue;
            };
            verified = false;
            let dir = if self.state[q] == State::Lower {
                1.0
            } else {
                -1.0
            };
            let mut theta = self.ub[q];
            let mut leave: Option<(usize, bool, f64)> = None;
            for i in 0..self.m {
                let alpha = dir * self.t[i * w + q];
                let (lim, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i] / alpha, false)
                } else if alpha < -PIVOT_TOL && self.ub[self.basis[i]].is_finite() {
                    ((self.ub[self.basis[i]] - self.beta[i]) / -alpha, true)
                } else {
                    continue;
                };
                let lim = lim.max(0.0);
                let better = match leave {
                    None => lim <= theta,
                    Some((r, _, a)) => {
                        if lim < theta - 1e-12 {
                            true
                        } else if lim <= theta + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                libm::fabs(alpha) > libm::fabs(a)
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = if leave.is_none() { lim } else { theta.min(lim) };
                    leave = Some((i, to_upper, alpha));
                }
            }
            if !theta.is_finite() {
                return Ok(Outcome::Unbounded);
            }
            self.iterations += 1;
            since_refactor += 1;
            if theta < 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            if theta > 0.0 {
                for i in 0..self.m {
                    self.beta[i] -= dir * theta * self.t[i * w + q];
                }
            }
            match leave {
                // The entering column reaches its opposite bound first.
                None => {
                    self.state[q] = if dir > 0.0 {
                        State::Upper
                    } else {
                        State::Lower
                    };
                }
                Some((r, to_upper, _)) => {
                    let start = if dir > 0.0 { 0.0 } else { self.ub[q] };
                    let old = self.basis[r];
                    self.state[old] = if to_upper { State::Upper } else { State::Lower };
                    self.pivot(r, q);
                    self.basis[r] = q;
                    self.state[q] = State::Basic;
                    self.beta[r] = start + dir * theta;
                }
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.width()];
        for j in 0..self.width() {
            if self.state[j] == State::Upper {
                y[j] = self.ub[j];
            }
        }
        for (i, &bc) in self.basis.iter().enumerate() {
            y[bc] = self.beta[i].max(0.0).min(self.ub[bc]);
        }
        y
    }
}

pub struct Lp<'a> {
    pub objective: &'a [f64],
    pub rows: &'a [Row],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

pub fn solve(lp: &Lp, feas_tol: f64, max_iterations: u64) -> Solution {
    let ncols = lp.objective.len();
    let mut x = vec![0.0; ncols];
    let fail = |outcome, x| Solution {
        outcome,
        x,
        iterations: 0,
    };
    for j in 0..ncols {
        if lp.lower[j] > lp.upper[j] + feas_tol {
            return fail(Outcome::Infeasible, x);
        }
    }

    // Internal columns for each free original column.
    let mut maps: Vec<ColMap> = Vec::new();
    let mut first_internal = vec![usize::MAX; ncols];
    let mut ub_int: Vec<f64> = Vec::new();
    let mut shift = vec![0.0; ncols];
    for j in 0..ncols {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() && u.is_finite() && u - l <= 1e-12 {
            shift[j] = l;
            continue;
        }
        first_internal[j] = maps.len();
        if l.is_finite() {
            shift[j] = l;
            maps.push(ColMap { orig: j, sign: 1.0 });
            ub_int.push(u - l);
        } else if u.is_finite() {
            shift[j] = u;
            maps.push(ColMap {
                orig: j,
                sign: -1.0,
            });
            ub_int.push(f64::INFINITY);
        } else {
            maps.push(ColMap { orig: j, sign: 1.0 });
            ub_int.push(f64::INFINITY);
            maps.push(ColMap {
                orig: j,
                sign: -1.0,
            });
            ub_int.push(f64::INFINITY);
        }
    }

    struct SparseRow {
        coefs: Vec<(usize, f64)>,
        rhs: f64,
        le: bool,
    }
    let mut rows: Vec<SparseRow> = Vec::new();
    for row in lp.rows {
        let mut rhs = row.rhs;
        let mut coefs: Vec<(usize, f64)> = Vec::new();
        for &(c, a) in &row.coefs {
            rhs -= a * shift[c];
            if first_internal[c] == usize::MAX || a == 0.0 {
                continue;
            }
            let k = first_internal[c];
            coefs.push((k, a * maps[k].sign));
            if maps.get(k + 1).is_some_and(|m| m.orig == c) {
                coefs.push((k + 1, a * maps[k + 1].sign));
            }
        }
        coefs.sort_by_key(|p| p.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (k, a) in coefs {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += a,
                _ => merged.push((k, a)),
            }
        }
        merged.retain(|p| p.1 != 0.0);
        let le = row.sense == Sense::Le;
        if merged.is_empty() {
            let bad = if le {
                rhs < -feas_tol
            } else {
                libm::fabs(rhs) > feas_tol
            };
            if bad {
                return fail(Outcome::Infeasible, x);
            }
            continue;
        }
        rows.push(SparseRow {
            coefs: merged,
            rhs,
            le,
        });
    }

    let n_struct = maps.len();
    let n_slack = rows.iter().filter(|r| r.le).count();
    let n = n_struct + n_slack;
    let m = rows.len();
    if m == 0 {
        // Only bounds: every column sits at its cheaper bound.
        let mut y = vec![0.0; n_struct];
        for (k, map) in maps.iter().enumerate() {
            let c = lp.objective[map.orig] * map.sign;
            if c < 0.0 {
                if !ub_int[k].is_finite() {
                    return fail(Outcome::Unbounded, x);
                }
                y[k] = ub_int[k];
            }
        }
        for j in 0..ncols {
            x[j] = shift[j];
        }
        for (k, map) in maps.iter().enumerate() {
            x[map.orig] += map.sign * y[k];
        }
        return Solution {
            outcome: Outcome::Optimal,
            x,
            iterations: 0,
        };
    }

    let w = n + m;
    let mut a = vec![0.0; m * w];
    let mut b = vec![0.0; m];
    let mut slack_of_row = vec![usize::MAX; m];
    let mut next_slack = n_struct;
    for (i, r) in rows.iter().enumerate() {
        let scale = 1.0 / r.coefs.iter().fold(0.0f64, |mx, p| mx.max(libm::fabs(p.1)));
        for &(k, v) in &r.coefs {
            a[i * w + k] = v * scale;
        }
        b[i] = r.rhs * scale;
        if r.le {
            a[i * w + next_slack] = 1.0;
            slack_of_row[i] = next_slack;
            next_slack += 1;
        }
    }
    let mut col_scale = vec![1.0; n];
    for k in 0..n_struct {
        let mx = (0..m).fold(0.0f64, |mx, i| mx.max(libm::fabs(a[i * w + k])));
        if mx > 0.0 {
            let s = 1.0 / mx;
            col_scale[k] = s;
            for i in 0..m {
                a[i * w + k] *= s;
            }
        }
    }
    let mut ub = vec![f64::INFINITY; w];
    let mut cost2 = vec![0.0; w];
    for k in 0..n_struct {
        ub[k] = ub_int[k] / col_scale[k];
        cost2[k] = lp.objective[maps[k].orig] * maps[k].sign * col_scale[k];
    }
    let mut basis = vec![0; m];
    let mut state = vec![State::Lower; w];
    let mut blocked = vec![false; w];
    let mut cost1 = vec![0.0; w];
    for i in 0..m {
        if b[i] < 0.0 {
            for c in 0..n {
                a[i * w + c] = -a[i * w + c];
            }
            b[i] = -b[i];
        }
        let art = n + i;
        a[i * w + art] = 1.0;
        let s = slack_of_row[i];
        if s != usize::MAX && a[i * w + s] > 0.0 {
            basis[i] = s;
            state[s] = State::Basic;
            ub[art] = 0.0;
            blocked[art] = true;
        } else {
            basis[i] = art;
            state[art] = State::Basic;
            cost1[art] = 1.0;
        }
    }
    let needs_phase1 = cost1.iter().any(|&c| c > 0.0);
    let mut tab = Tableau {
        m,
        n,
        t: a.clone(),
        a,
        b: b.clone(),
        beta: b,
        d: Vec::new(),
        ub,
        cost: cost1,
        basis,
        state,
        blocked,
        iterations: 0,
        max_iterations,
    };
    let stalled = |tab: &Tableau, msg: String| Solution {
        outcome: Outcome::Stalled(msg),
        x: vec![0.0; ncols],
        iterations: tab.iterations,
    };

    if needs_phase1 {
        tab.recompute_costs();
        match tab.run() {
            Ok(Outcome::Optimal) => {}
            Ok(Outcome::Stalled(msg)) => return stalled(&tab, msg),
            Ok(other) => return stalled(&tab, alloc::format!("phase one ended {:?}", other)),
            Err(msg) => return stalled(&tab, msg),
        }
        let infeas: f64 = tab
            .basis
            .iter()
            .zip(&tab.beta)
            .filter(|(&bc, _)| bc >= n)
            .map(|(_, &v)| v)
            .sum();
        let b_scale = tab.b.iter().fold(1.0f64, |mx, v| mx.max(libm::fabs(*v)));
        if infeas > feas_tol * b_scale {
            return Solution {
                outcome: Outcome::Infeasible,
                x,
                iterations: tab.iterations,
            };
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < n {
                continue;
            }
            let pick = (0..n)
                .filter(|&j| tab.state[j] != State::Basic && tab.ub[j] > 0.0)
                .max_by(|&i, &j| {
                    libm::fabs(tab.t[r * w + i])
                        .partial_cmp(&libm::fabs(tab.t[r * w + j]))
                        .unwrap_or(core::cmp::Ordering::Equal)
                        .then(j.cmp(&i))
                });
            if let Some(j) = pick {
                if libm::fabs(tab.t[r * w + j]) > 1e-7 {
                    let old = tab.basis[r];
                    let val = if tab.state[j] == State::Upper {
                        tab.ub[j]
                    } else {
                        0.0
                    };
                    tab.pivot(r, j);
                    tab.state[old] = State::Lower;
                    tab.basis[r] = j;
                    tab.state[j] = State::Basic;
                    tab.beta[r] = val;
                }
            }
        }
        for j in n..w {
            tab.ub[j] = 0.0;
            tab.blocked[j] = true;
            if tab.state[j] == State::Upper {
                tab.state[j] = State::Lower;
            }
        }
    }
    tab.cost = cost2;
    if let Err(msg) = tab.refactor() {
        return stalled(&tab, msg);
    }
    match tab.run() {
        Ok(Outcome::Optimal) => {}
        Ok(Outcome::Unbounded) => {
            return Solution {
                outcome: Outcome::Unbounded,
                x,
                iterations: tab.iterations,
            }
        }
        Ok(other) => return stalled(&tab, alloc::format!("{:?}", other)),
        Err(msg) => return stalled(&tab, msg),
    }
    let y = tab.values();
    for j in 0..ncols {
        x[j] = shift[j];
    }
    for (k, map) in maps.iter().enumerate() {
        x[map.orig] += map.sign * y[k] * col_scale[k];
    }
    for j in 0..ncols {
        x[j] = x[j].max(lp.lower[j]).min(lp.upper[j]);
    }
    Solution {
        outcome: Outcome::Optimal,
        x,
        iterations: tab.iterations,
    }
}
