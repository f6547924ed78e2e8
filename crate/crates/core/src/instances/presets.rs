//! Built-in networks and generator configurations.
//!
//! `tiny_*` is the desk-scale system used throughout the tests: two road
//! nodes joined by one congestible edge, one charging station, three buses.
//! `paper_*` is the IEEE 33-bus feeder coupled with the Nguyen-Dupuis road
//! network at hourly resolution.

use alloc::vec;
use alloc::vec::Vec;

use super::{CongestionConfig, FleetConfig, GenConfig, LoadConfig, SolarConfig};
use crate::netmodel::{
    CsBus, DistributionNetwork, Edge, Generator, Line, Network, PvUnit, TransportNetwork,
};

const SOLAR_CLEAR: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.15, 0.35, 0.55, 0.72, 0.85, 0.95, 1.0, 0.95, 0.85, 0.7, 0.5,
    0.3, 0.1, 0.02, 0.0, 0.0, 0.0, 0.0,
];
const SOLAR_HAZY: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.03, 0.1, 0.22, 0.35, 0.48, 0.55, 0.6, 0.62, 0.58, 0.5, 0.42, 0.3,
    0.18, 0.06, 0.01, 0.0, 0.0, 0.0, 0.0,
];
const SOLAR_CLOUDY: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.02, 0.06, 0.12, 0.25, 0.18, 0.3, 0.22, 0.35, 0.28, 0.2, 0.24, 0.15,
    0.08, 0.03, 0.0, 0.0, 0.0, 0.0, 0.0,
];
const LOAD_RESIDENTIAL: [f64; 24] = [
    0.45, 0.4, 0.38, 0.37, 0.38, 0.45, 0.6, 0.75, 0.7, 0.62, 0.6, 0.6, 0.62, 0.6, 0.6, 0.65, 0.75,
    0.9, 1.0, 0.98, 0.9, 0.78, 0.62, 0.5,
];
const LOAD_COMMERCIAL: [f64; 24] = [
    0.35, 0.33, 0.32, 0.32, 0.33, 0.38, 0.5, 0.7, 0.88, 0.96, 1.0, 0.98, 0.95, 0.97, 0.96, 0.92,
    0.85, 0.72, 0.6, 0.52, 0.46, 0.42, 0.39, 0.37,
];

fn shapes(s: &[[f64; 24]]) -> Vec<Vec<f64>> {
    s.iter().map(|p| p.to_vec()).collect()
}

pub fn tiny_network() -> Network {
    Network {
        transport: TransportNetwork {
            nodes: vec![1, 2],
            edges: vec![Edge {
                origin: 1,
                destination: 2,
                normal_travel_spans: 1,
                congested_travel_spans: 2,
                move_energy: 4.0,
            }],
            cs_nodes: vec![1],
        },
        distribution: DistributionNetwork {
            buses: vec![0, 1, 2],
            lines: vec![
                Line {
                    from_bus: 0,
                    to_bus: 1,
                    resistance: 0.004,
                    reactance: 0.003,
                    flow_limit: 600.0,
                },
                Line {
                    from_bus: 1,
                    to_bus: 2,
                    resistance: 0.006,
                    reactance: 0.004,
                    flow_limit: 600.0,
                },
            ],
            dgs: vec![
                Generator {
                    bus: 0,
                    p_min: -500.0,
                    p_max: 1000.0,
                    q_min: -500.0,
                    q_max: 500.0,
                    fuel_cost: 0.12,
                },
                Generator {
                    bus: 2,
                    p_min: 0.0,
                    p_max: 30.0,
                    q_min: -20.0,
                    q_max: 20.0,
                    fuel_cost: 0.2,
                },
            ],
            pv_units: vec![PvUnit { bus: 2 }],
            cs_bus_map: vec![CsBus { node: 1, bus: 1 }],
            v_min_sq: 0.9025,
            v_max_sq: 1.1025,
            root_bus: 0,
            base_kva: 1000.0,
            v_root_sq: 1.0,
        },
    }
}

pub fn tiny_config() -> GenConfig {
    GenConfig {
        network: tiny_network(),
        horizon: 6,
        scenarios: 1,
        od_pairs: vec![(1, 2)],
        midday_nodes: vec![1, 2],
        evening_nodes: vec![2],
        morning_window: (4.0, 8.0),
        evening_window: (12.0, 16.0),
        swapped_starts: vec![],
        end_at_destination: true,
        congestion: CongestionConfig {
            window: (4.0, 8.0),
            min_spans: 0,
            max_spans: 2,
        },
        solar: SolarConfig {
            capacity: vec![40.0],
            profiles: shapes(&[SOLAR_CLEAR, SOLAR_HAZY, SOLAR_CLOUDY]),
            noise: 0.15,
        },
        load: LoadConfig {
            base_p: vec![0.0, 60.0, 45.0],
            base_q: vec![0.0, 20.0, 15.0],
            profiles: shapes(&[LOAD_RESIDENTIAL, LOAD_COMMERCIAL]),
            noise: 0.1,
        },
        fleet: FleetConfig {
            e_init: (26.0, 45.0),
            e_min: 8.0,
            e_max: 60.0,
            p_max: 7.0,
            inefficiency: 0.05,
            charge_price: 0.30,
            discharge_price: 0.10,
        },
        terminal_energy: false,
        max_retries: 200,
    }
}

/// Nguyen-Dupuis links (origin, destination, free-flow minutes).
const NGUYEN_DUPUIS: [(u32, u32, u32); 19] = [
    (1, 5, 7),
    (1, 12, 9),
    (4, 5, 9),
    (4, 9, 12),
    (5, 6, 3),
    (5, 9, 9),
    (6, 7, 5),
    (6, 10, 13),
    (7, 8, 5),
    (7, 11, 9),
    (8, 2, 9),
    (9, 10, 10),
    (9, 13, 9),
    (10, 11, 6),
    (11, 2, 9),
    (11, 3, 8),
    (12, 6, 7),
    (12, 8, 14),
    (13, 3, 11),
];

/// Road network with both directions of every link; links of nine minutes
/// or more take two hourly spans under congestion.
pub fn nguyen_dupuis() -> TransportNetwork {
    let mut edges = Vec::new();
    for &(a, b, minutes) in &NGUYEN_DUPUIS {
        let congested = if minutes >= 9 { 2 } else { 1 };
        for (o, d) in [(a, b), (b, a)] {
            edges.push(Edge {
                origin: o,
                destination: d,
                normal_travel_spans: 1,
                congested_travel_spans: congested,
                move_energy: 6.0,
            });
        }
    }
    TransportNetwork {
        nodes: (1..=13).collect(),
        edges,
        cs_nodes: vec![2, 4, 6, 9, 11, 12],
    }
}

/// IEEE 33-bus branch data (from, to, R ohm, X ohm) and loads (kW, kvar).
const IEEE33_LINES: [(u32, u32, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
];

const IEEE33_LOADS: [(f64, f64); 33] = [
    (0.0, 0.0),
    (100.0, 60.0),
    (90.0, 40.0),
    (120.0, 80.0),
    (60.0, 30.0),
    (60.0, 20.0),
    (200.0, 100.0),
    (200.0, 100.0),
    (60.0, 20.0),
    (60.0, 20.0),
    (45.0, 30.0),
    (60.0, 35.0),
    (60.0, 35.0),
    (120.0, 80.0),
    (60.0, 10.0),
    (60.0, 20.0),
    (60.0, 20.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 50.0),
    (420.0, 200.0),
    (420.0, 200.0),
    (60.0, 25.0),
    (60.0, 25.0),
    (60.0, 20.0),
    (120.0, 70.0),
    (200.0, 600.0),
    (150.0, 70.0),
    (210.0, 100.0),
    (60.0, 40.0),
];

pub fn ieee33() -> DistributionNetwork {
    // 12.66 kV, 10 MVA base
    let base_kva = 10_000.0;
    let z_base = 12.66 * 12.66 / 10.0;
    let lines = IEEE33_LINES
        .iter()
        .map(|&(a, b, r, x)| Line {
            from_bus: a,
            to_bus: b,
            resistance: r / z_base,
            reactance: x / z_base,
            flow_limit: 6000.0,
        })
        .collect();
    DistributionNetwork {
        buses: (1..=33).collect(),
        lines,
        dgs: vec![
            Generator {
                bus: 1,
                p_min: -5000.0,
                p_max: 10_000.0,
                q_min: -5000.0,
                q_max: 5000.0,
                fuel_cost: 0.12,
            },
            Generator {
                bus: 18,
                p_min: 0.0,
                p_max: 500.0,
                q_min: -300.0,
                q_max: 300.0,
                fuel_cost: 0.10,
            },
            Generator {
                bus: 22,
                p_min: 0.0,
                p_max: 500.0,
                q_min: -300.0,
                q_max: 300.0,
                fuel_cost: 0.09,
            },
            Generator {
                bus: 33,
                p_min: 0.0,
                p_max: 500.0,
                q_min: -300.0,
                q_max: 300.0,
                fuel_cost: 0.11,
            },
        ],
        pv_units: vec![
            PvUnit { bus: 10 },
            PvUnit { bus: 17 },
            PvUnit { bus: 24 },
            PvUnit { bus: 30 },
        ],
        cs_bus_map: vec![
            CsBus { node: 2, bus: 5 },
            CsBus { node: 4, bus: 10 },
            CsBus { node: 6, bus: 15 },
            CsBus { node: 9, bus: 20 },
            CsBus { node: 11, bus: 25 },
            CsBus { node: 12, bus: 30 },
        ],
        v_min_sq: 0.81,
        v_max_sq: 1.1025,
        root_bus: 1,
        base_kva,
        v_root_sq: 1.0,
    }
}

pub fn paper_network() -> Network {
    Network {
        transport: nguyen_dupuis(),
        distribution: ieee33(),
    }
}

/// Hourly day with five equiprobable solar scenarios and the schedule rules
/// of the full-scale study.
pub fn paper_config() -> GenConfig {
    GenConfig {
        network: paper_network(),
        horizon: 24,
        scenarios: 5,
        od_pairs: vec![(1, 11), (1, 13), (3, 11), (3, 13)],
        midday_nodes: vec![6, 7, 9, 10, 12],
        evening_nodes: vec![2, 4, 5, 8],
        morning_window: (6.0, 12.0),
        evening_window: (14.0, 22.0),
        swapped_starts: vec![3],
        end_at_destination: true,
        congestion: CongestionConfig {
            window: (6.0, 10.0),
            min_spans: 0,
            max_spans: 3,
        },
        solar: SolarConfig {
            capacity: vec![400.0, 300.0, 400.0, 300.0],
            profiles: shapes(&[SOLAR_CLEAR, SOLAR_HAZY, SOLAR_CLOUDY]),
            noise: 0.15,
        },
        load: LoadConfig {
            base_p: IEEE33_LOADS.iter().map(|l| l.0).collect(),
            base_q: IEEE33_LOADS.iter().map(|l| l.1).collect(),
            profiles: shapes(&[LOAD_RESIDENTIAL, LOAD_COMMERCIAL]),
            noise: 0.1,
        },
        fleet: FleetConfig {
            e_init: (30.0, 55.0),
            e_min: 8.0,
            e_max: 60.0,
            p_max: 7.0,
            inefficiency: 0.05,
            charge_price: 0.30,
            discharge_price: 0.10,
        },
        terminal_energy: false,
        max_retries: 200,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::validate_network;

    #[test]
    fn presets_validate() {
        for net in [tiny_network(), paper_network()] {
            let r = validate_network(&net.transport, &net.distribution);
            assert!(r.is_empty(), "{r}");
        }
        tiny_config().validate().unwrap();
        paper_config().validate().unwrap();
    }
}
