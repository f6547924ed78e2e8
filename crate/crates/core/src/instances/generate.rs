//! Seeded instance generator.
//!
//! Each EV draws a start/end pair, a first job in the morning window and a
//! second job in the evening window. Starts listed in `swapped_starts` serve
//! the two node sets in the opposite order. Solar and load come from a pool of
//! daily shapes, mixed and matched per instance and perturbed by
//! multiplicative noise.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    validate_instance, CongestionProfile, Ev, FleetSpec, InstanceError, Job, JobSchedule,
    LoadProfile, ProblemInstance, ScenarioSet,
};
use crate::netmodel::{validate_network, NetError, Network, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongestionConfig {
    /// Hours of day a congestion window may cover.
    pub window: (f64, f64),
    /// Window length range in spans (inclusive); 0 allows free-flowing days.
    pub min_spans: u32,
    pub max_spans: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarConfig {
    /// Rated output per PV unit, kW.
    pub capacity: Vec<f64>,
    /// Hourly (24-value) per-unit shapes.
    pub profiles: Vec<Vec<f64>>,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// Peak demand per bus (ascending bus id), kW / kvar.
    pub base_p: Vec<f64>,
    pub base_q: Vec<f64>,
    /// Hourly (24-value) per-unit shapes.
    pub profiles: Vec<Vec<f64>>,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub e_init: (f64, f64),
    pub e_min: f64,
    pub e_max: f64,
    pub p_max: f64,
    pub inefficiency: f64,
    pub charge_price: f64,
    pub discharge_price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub network: Network,
    pub horizon: u32,
    pub scenarios: usize,
    pub od_pairs: Vec<(NodeId, NodeId)>,
    pub midday_nodes: Vec<NodeId>,
    pub evening_nodes: Vec<NodeId>,
    /// Hours of day.
    pub morning_window: (f64, f64),
    pub evening_window: (f64, f64),
    pub swapped_starts: Vec<NodeId>,
    /// Pin each EV to its end node at the last span.
    pub end_at_destination: bool,
    pub congestion: CongestionConfig,
    pub solar: SolarConfig,
    pub load: LoadConfig,
    pub fleet: FleetConfig,
    pub terminal_energy: bool,
    pub max_retries: u32,
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), InstanceError> {
        let cfg = |m: String| Err(InstanceError::Config(m));
        let report = validate_network(&self.network.transport, &self.network.distribution);
        if !report.is_empty() {
            return Err(NetError::Invalid(report).into());
        }
        if self.horizon < 2 {
            return Err(NetError::InvalidHorizon(self.horizon).into());
        }
        if self.scenarios == 0 {
            return cfg(String::from("need at least one scenario"));
        }
        let nodes = &self.network.transport.nodes;
        let known = |n: &NodeId| nodes.contains(n);
        if self.od_pairs.is_empty() || !self.od_pairs.iter().all(|(o, d)| known(o) && known(d)) {
            return cfg(String::from(
                "od_pairs must be non-empty and use declared nodes",
            ));
        }
        if self.midday_nodes.is_empty() || self.evening_nodes.is_empty() {
            return cfg(String::from(
                "midday and evening node sets must be non-empty",
            ));
        }
        if !self
            .midday_nodes
            .iter()
            .chain(&self.evening_nodes)
            .all(known)
        {
            return cfg(String::from("schedule node sets must use declared nodes"));
        }
        if self.window_spans(self.morning_window).is_empty()
            || self.window_spans(self.evening_window).is_empty()
        {
            return cfg(String::from(
                "time windows must each contain at least one span",
            ));
        }
        if self.congestion.min_spans > self.congestion.max_spans {
            return cfg(String::from("congestion min_spans exceeds max_spans"));
        }
        let n_pv = self.network.distribution.pv_units.len();
        let n_bus = self.network.distribution.buses.len();
        let hourly = |p: &[Vec<f64>]| {
            !p.is_empty()
                && p.iter()
                    .all(|v| v.len() == 24 && v.iter().all(|x| *x >= 0.0))
        };
        if self.solar.capacity.len() != n_pv || !hourly(&self.solar.profiles) {
            return cfg(format!(
                "solar config needs {n_pv} capacities and 24-value nonnegative profiles"
            ));
        }
        if self.load.base_p.len() != n_bus
            || self.load.base_q.len() != n_bus
            || !hourly(&self.load.profiles)
        {
            return cfg(format!(
                "load config needs {n_bus} base values and 24-value nonnegative profiles"
            ));
        }
        let f = &self.fleet;
        if !(f.e_min <= f.e_init.0
            && f.e_init.0 <= f.e_init.1
            && f.e_init.1 <= f.e_max
            && f.p_max > 0.0)
        {
            return cfg(String::from(
                "fleet energy bounds must satisfy e_min <= e_init range <= e_max, p_max > 0",
            ));
        }
        if !(f.inefficiency >= 0.0 && f.inefficiency < 1.0) {
            return cfg(String::from("inefficiency must be in [0, 1)"));
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        24.0 / self.horizon as f64
    }

    /// Spans whose starting timestep falls inside `[h0, h1]` hours.
    pub fn window_spans(&self, (h0, h1): (f64, f64)) -> Vec<u32> {
        let dt = self.dt();
        (1..self.horizon)
            .filter(|&s| (s - 1) as f64 * dt >= h0 - 1e-9 && (s - 1) as f64 * dt <= h1 + 1e-9)
            .collect()
    }
}

/// Derives an independent seed for instance `ordinal` of a batch.
pub fn child_seed(master: u64, ordinal: u64) -> u64 {
    splitmix(master ^ splitmix(ordinal.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_hourly(shape: &[f64], hour: f64) -> f64 {
    let h = hour % 24.0;
    let i = libm::floor(h) as usize % 24;
    let frac = h - libm::floor(h);
    shape[i] * (1.0 - frac) + shape[(i + 1) % 24] * frac
}

fn noisy(rng: &mut ChaCha8Rng, noise: f64) -> f64 {
    if noise > 0.0 {
        1.0 + rng.gen_range(-noise..=noise)
    } else {
        1.0
    }
}

/// Generates one instance with `fleet_size` EVs. Deterministic in `seed`.
pub fn generate_instance(
    seed: u64,
    fleet_size: usize,
    cfg: &GenConfig,
) -> Result<ProblemInstance, InstanceError> {
    if fleet_size == 0 {
        return Err(InstanceError::Config(String::from(
            "fleet size must be >= 1",
        )));
    }
    cfg.validate()?;
    let tsn = crate::netmodel::build_tsn(&cfg.network.transport, cfg.horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = cfg.horizon as usize;
    let spans = cfg.horizon - 1;
    let dt = cfg.dt();

    for _attempt in 0..cfg.max_retries.max(1) {
        // congestion window
        let mut congested = alloc::vec![false; spans as usize];
        let win = cfg.window_spans(cfg.congestion.window);
        let len = rng.gen_range(cfg.congestion.min_spans..=cfg.congestion.max_spans) as usize;
        if len > 0 && !win.is_empty() {
            let len = len.min(win.len());
            let start = rng.gen_range(0..=win.len() - len);
            for &s in &win[start..start + len] {
                congested[s as usize - 1] = true;
            }
        }

        let morning = cfg.window_spans(cfg.morning_window);
        let evening = cfg.window_spans(cfg.evening_window);
        let mut evs = Vec::with_capacity(fleet_size);
        let mut jobs = Vec::new();
        let mut ok = true;
        for k in 0..fleet_size {
            let mut placed = false;
            for _ in 0..cfg.max_retries.max(1) {
                let (o, d) = *cfg.od_pairs.choose(&mut rng).expect("validated non-empty");
                let (first, second) = if cfg.swapped_starts.contains(&o) {
                    (&cfg.evening_nodes, &cfg.midday_nodes)
                } else {
                    (&cfg.midday_nodes, &cfg.evening_nodes)
                };
                let j1 = Job {
                    ev: k,
                    node: *first.choose(&mut rng).unwrap(),
                    span: *morning.choose(&mut rng).unwrap(),
                };
                let j2 = Job {
                    ev: k,
                    node: *second.choose(&mut rng).unwrap(),
                    span: *evening.choose(&mut rng).unwrap(),
                };
                let e_init = rng.gen_range(cfg.fleet.e_init.0..=cfg.fleet.e_init.1);
                let mut mine = alloc::vec![j1, j2];
                if cfg.end_at_destination {
                    mine.push(Job {
                        ev: k,
                        node: d,
                        span: spans,
                    });
                }
                mine.sort_by_key(|j| j.span);
                mine.dedup();
                let mut pins = BTreeMap::new();
                let consistent = mine
                    .iter()
                    .all(|j| pins.insert(j.span, j.node).map_or(true, |p| p == j.node));
                if consistent && j1.span < j2.span && tsn.reachable(o, &congested, &pins).is_some()
                {
                    evs.push(Ev {
                        start: o,
                        e_init,
                        e_min: cfg.fleet.e_min,
                        e_max: cfg.fleet.e_max,
                        p_max: cfg.fleet.p_max,
                    });
                    jobs.extend(mine);
                    placed = true;
                    break;
                }
            }
            if !placed {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }

        let n_sc = cfg.scenarios;
        let mut solar = Vec::with_capacity(n_sc);
        for _ in 0..n_sc {
            let mut per_pv = Vec::new();
            for &cap in &cfg.solar.capacity {
                let shape = cfg.solar.profiles.choose(&mut rng).unwrap();
                let row: Vec<f64> = (0..horizon)
                    .map(|t| {
                        (cap * sample_hourly(shape, t as f64 * dt)
                            * noisy(&mut rng, cfg.solar.noise))
                        .max(0.0)
                    })
                    .collect();
                per_pv.push(row);
            }
            solar.push(per_pv);
        }
        let shape = cfg.load.profiles.choose(&mut rng).unwrap();
        let mut active = Vec::new();
        let mut reactive = Vec::new();
        for (bp, bq) in cfg.load.base_p.iter().zip(&cfg.load.base_q) {
            let mut p = Vec::with_capacity(horizon);
            let mut q = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let level = sample_hourly(shape, t as f64 * dt) * noisy(&mut rng, cfg.load.noise);
                p.push((bp * level).max(0.0));
                q.push(bq * level);
            }
            active.push(p);
            reactive.push(q);
        }

        let inst = ProblemInstance {
            network: cfg.network.clone(),
            horizon: cfg.horizon,
            scenarios: ScenarioSet {
                probabilities: alloc::vec![1.0 / n_sc as f64; n_sc],
                solar,
            },
            loads: LoadProfile { active, reactive },
            fleet: FleetSpec {
                evs,
                inefficiency: cfg.fleet.inefficiency,
                charge_price: cfg.fleet.charge_price,
                discharge_price: cfg.fleet.discharge_price,
            },
            schedule: JobSchedule { jobs },
            congestion: CongestionProfile { congested },
            terminal_energy: cfg.terminal_energy,
        };
        // exact 1/n probabilities may not sum to 1 in floating point
        let mut inst = inst;
        fix_probabilities(&mut inst.scenarios.probabilities);
        match validate_instance(&inst) {
            Ok(()) => return Ok(inst),
            Err(InstanceError::Unreachable { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(InstanceError::RetriesExhausted(cfg.max_retries))
}

fn fix_probabilities(p: &mut [f64]) {
    let n = p.len();
    if n == 0 {
        return;
    }
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
}

/// EV counts `lo, lo + m, ...` up to `hi`, with `hi` appended when the
/// step does not land on it.
pub fn ev_counts(lo: usize, hi: usize, m: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (lo..=hi).step_by(m.max(1)).collect();
    if v.last() != Some(&hi) && lo <= hi {
        v.push(hi);
    }
    v
}

/// Assigns `n` instances to `counts` round-robin, so each count gets
/// ⌊n/|E|⌋ or ⌈n/|E|⌉ instances.
pub fn balanced_counts(n: usize, counts: &[usize]) -> Vec<usize> {
    (0..n).map(|i| counts[i % counts.len()]).collect()
}

/// `n` instances spread evenly over `counts`, instance i seeded by `child_seed(master, i)`.
pub fn generate_batch(
    master: u64,
    n: usize,
    counts: &[usize],
    cfg: &GenConfig,
) -> Result<Vec<ProblemInstance>, InstanceError> {
    if counts.is_empty() {
        return Err(InstanceError::Config(String::from("empty EV count set")));
    }
    balanced_counts(n, counts)
        .into_iter()
        .enumerate()
        .map(|(i, e)| generate_instance(child_seed(master, i as u64), e, cfg))
        .collect()
}

/// Seeded 90/10 split of `0..n` into (train, validation) index lists.
pub fn split_train_validation(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_val = if n >= 2 {
        libm::round(n as f64 * 0.1).max(1.0) as usize
    } else {
        0
    };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::presets;

    #[test]
    fn same_seed_same_instance() {
        let cfg = presets::tiny_config();
        let a = generate_instance(7, 2, &cfg).unwrap();
        let b = generate_instance(7, 2, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_instance(8, 2, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_instance_is_valid_and_reachable() {
        let cfg = presets::tiny_config();
        for seed in 0..30 {
            let inst = generate_instance(seed, 2, &cfg).unwrap();
            validate_instance(&inst).unwrap();
            let tsn = inst.tsn().unwrap();
            for k in 0..2 {
                assert!(tsn
                    .reachable(
                        inst.fleet.evs[k].start,
                        &inst.congestion.congested,
                        &inst.pins(k)
                    )
                    .is_some());
            }
        }
    }

    #[test]
    fn paper_schedule_rules() {
        let cfg = presets::paper_config();
        assert_eq!(
            cfg.od_pairs,
            alloc::vec![(1, 11), (1, 13), (3, 11), (3, 13)]
        );
        assert_eq!(cfg.midday_nodes, alloc::vec![6, 7, 9, 10, 12]);
        assert_eq!(cfg.evening_nodes, alloc::vec![2, 4, 5, 8]);
        let inst = generate_instance(3, 20, &cfg).unwrap();
        for (k, ev) in inst.fleet.evs.iter().enumerate() {
            let jobs: Vec<_> = inst.schedule.for_ev(k).collect();
            let (first_set, second_set) = if ev.start == 1 {
                (&cfg.midday_nodes, &cfg.evening_nodes)
            } else {
                (&cfg.evening_nodes, &cfg.midday_nodes)
            };
            // hours: first job 6..12, second 14..22
            let hour = |s: u32| (s - 1) as f64;
            assert!(
                first_set.contains(&jobs[0].node) && (6.0..=12.0).contains(&hour(jobs[0].span))
            );
            assert!(
                second_set.contains(&jobs[1].node) && (14.0..=22.0).contains(&hour(jobs[1].span))
            );
        }
        assert_eq!(inst.scenarios.len(), 5);
        assert!(inst
            .scenarios
            .probabilities
            .iter()
            .all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn table_one_counts() {
        assert_eq!(
            ev_counts(20, 100, 15),
            alloc::vec![20, 35, 50, 65, 80, 95, 100]
        );
        assert_eq!(ev_counts(20, 100, 20), alloc::vec![20, 40, 60, 80, 100]);
        assert_eq!(ev_counts(20, 100, 5).len(), 17);
    }

    #[test]
    fn balance_and_split() {
        let counts = [2, 3, 4];
        let assigned = balanced_counts(10, &counts);
        for c in counts {
            let n = assigned.iter().filter(|&&x| x == c).count();
            assert!(n == 3 || n == 4);
        }
        let (tr, va) = split_train_validation(100, 1);
        assert_eq!((tr.len(), va.len()), (90, 10));
        assert_eq!(split_train_validation(100, 1), (tr, va));
    }
}
