use std::collections::BTreeMap;

use evjrs_core::instances::{generate_instance, presets, GenConfig, Job, ProblemInstance};
use evjrs_core::mip::*;
use evjrs_core::solver::{solve_lp, solve_mip, LpStatus, MipStatus, SolveConfig};
use proptest::prelude::*;

fn tiny(seed: u64, evs: usize) -> ProblemInstance {
    generate_instance(seed, evs, &presets::tiny_config()).unwrap()
}

fn tiny_scenarios(seed: u64, evs: usize, scenarios: usize) -> ProblemInstance {
    let cfg = GenConfig {
        scenarios,
        ..presets::tiny_config()
    };
    generate_instance(seed, evs, &cfg).unwrap()
}

fn optimum(inst: &ProblemInstance, mode: Mode) -> (MipModel, Vec<f64>) {
    let m = build_model(inst, mode).unwrap();
    let r = solve_mip(&m, &SolveConfig::default());
    assert_eq!(r.status, MipStatus::Optimal);
    (m, r.values)
}

#[test]
fn tiny_binary_count_per_ev() {
    let inst = tiny(3, 1);
    let tsn = inst.tsn().unwrap();
    // 2 idle arcs, one direct hop and a two-hop congested chain per span.
    assert_eq!(tsn.arcs_per_span, 5);
    let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
    assert_eq!(m.index.n_per_ev(), 5 * 5 + 2 * 6);
    assert_eq!(m.binary_cols().count(), 37);
    let binaries: Vec<usize> = m.binary_cols().collect();
    assert_eq!(binaries, (0..37).collect::<Vec<_>>());
}

#[test]
fn fleet_proportionality_and_scenario_replication() {
    let one = build_model(&tiny(4, 1), Mode::Deterministic(0)).unwrap();
    for e in [2, 3, 5] {
        let m = build_model(&tiny(4, e), Mode::Deterministic(0)).unwrap();
        assert_eq!(m.index.n_per_ev(), one.index.n_per_ev());
        assert_eq!(m.binary_cols().count(), e * one.index.n_per_ev());
    }
    let inst = tiny_scenarios(5, 2, 5);
    let det = build_model(&inst, Mode::Deterministic(2)).unwrap();
    let sto = build_model(&inst, Mode::Stochastic).unwrap();
    assert_eq!(sto.binary_cols().count(), 5 * det.binary_cols().count());
    assert!(build_model(&inst, Mode::Deterministic(5)).is_err());
}

#[test]
fn build_is_deterministic() {
    let a = build_model(&tiny(9, 3), Mode::Stochastic).unwrap();
    let b = build_model(&tiny(9, 3), Mode::Stochastic).unwrap();
    assert_eq!(a.canonical_bytes(), b.canonical_bytes());
    assert_eq!(a.meta.instance_hash, b.meta.instance_hash);
    let c = build_model(&tiny(10, 3), Mode::Stochastic).unwrap();
    assert_ne!(a.meta.instance_hash, c.meta.instance_hash);
}

#[test]
fn binary_bounds_and_registered_columns() {
    let m = build_model(&tiny(1, 2), Mode::Deterministic(0)).unwrap();
    for c in m.binary_cols() {
        assert!(m.lower[c] >= 0.0 && m.upper[c] <= 1.0);
    }
    for r in &m.rows {
        assert!(r.coefs.iter().all(|&(c, _)| c < m.n_cols()));
    }
    for (c, key) in m.index.keys().iter().enumerate() {
        assert_eq!(m.index.col(*key), Some(c));
    }
}

#[test]
fn schedule_span_zero_is_a_build_error() {
    let mut inst = tiny(2, 1);
    inst.schedule.jobs.push(Job {
        ev: 0,
        node: 1,
        span: 0,
    });
    assert!(matches!(
        build_model(&inst, Mode::Stochastic),
        Err(MipError::Build(_))
    ));
}

#[test]
fn empty_fixing_is_identity_and_non_binary_rejected() {
    let m = build_model(&tiny(2, 2), Mode::Deterministic(0)).unwrap();
    assert_eq!(apply_fixings(&m, &PartialAssignment::default()).unwrap(), m);
    let cont = m.binary.iter().position(|b| !b).unwrap();
    let pa = PartialAssignment {
        fixed: BTreeMap::from([(cont, true)]),
    };
    assert_eq!(apply_fixings(&m, &pa), Err(MipError::NotBinary(cont)));
    let pa = PartialAssignment {
        fixed: BTreeMap::from([(m.n_cols(), true)]),
    };
    assert_eq!(
        apply_fixings(&m, &pa),
        Err(MipError::OutOfRange(m.n_cols()))
    );
}

#[test]
fn forbidden_arc_fixed_on_is_infeasible() {
    let inst = tiny(6, 1);
    let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
    let tsn = inst.tsn().unwrap();
    // Any arc of span 1 not leaving the start node is excluded by the start row.
    let start = inst.fleet.evs[0].start;
    let arc = tsn
        .span_arcs(1)
        .iter()
        .find(|a| a.origin != evjrs_core::netmodel::TsnNode::Physical(start))
        .unwrap()
        .id;
    let col = m.index.at(VarKey::Route {
        sc: 0,
        ev: 0,
        arc: arc as u32,
    });
    let fixed = apply_fixings(
        &m,
        &PartialAssignment {
            fixed: BTreeMap::from([(col, true)]),
        },
    )
    .unwrap();
    assert_eq!(
        solve_lp(&fixed, &SolveConfig::default()).status,
        LpStatus::Infeasible
    );
    assert_eq!(
        solve_mip(&fixed, &SolveConfig::default()).status,
        MipStatus::Infeasible
    );
    assert_eq!(m.lower[col], 0.0, "original model untouched");
}

#[test]
fn optimal_labels_fixed_make_lp_attain_optimum() {
    let inst = tiny(11, 2);
    let (m, x) = optimum(&inst, Mode::Deterministic(0));
    let fixed = apply_fixings(&m, &PartialAssignment::from_values(&m, &x)).unwrap();
    let lp = solve_lp(&fixed, &SolveConfig::default());
    assert!((lp.objective - m.objective_value(&x)).abs() <= 1e-9 * m.objective_value(&x).abs());
    assert_eq!(binary_labels(&m, &x).len(), 2 * m.index.n_per_ev());
}

#[test]
fn optimal_solution_verifies_clean() {
    for seed in 0..5 {
        let inst = tiny(seed, 2);
        let (_, x) = optimum(&inst, Mode::Deterministic(0));
        let rep = verify_solution(&inst, Mode::Deterministic(0), &x);
        assert!(rep.is_feasible(), "{:?}", rep.violations);
        assert!(rep.max_residual <= 1e-6);
    }
}

#[test]
fn corrupted_energy_trajectory_is_flagged() {
    let inst = tiny(7, 2);
    let (m, mut x) = optimum(&inst, Mode::Deterministic(0));
    let col = m.index.at(VarKey::Energy { sc: 0, ev: 1, t: 4 });
    x[col] += 0.75;
    let rep = verify_solution(&inst, Mode::Deterministic(0), &x);
    let bal: Vec<_> = rep
        .violations
        .iter()
        .filter(|(t, _)| t.family == Family::EnergyBalance)
        .collect();
    assert_eq!(bal.len(), 2, "rows t=4 and t=5 both see the jump");
    assert!(bal.iter().all(|(t, r)| t.a == 1 && (r - 0.75).abs() < 1e-9));
}

#[test]
fn voltage_below_limit_is_flagged_with_its_residual() {
    let inst = tiny(8, 2);
    let (m, mut x) = optimum(&inst, Mode::Deterministic(0));
    let dn = &inst.network.distribution;
    let col = m.index.at(VarKey::Voltage {
        sc: 0,
        bus: 2,
        t: 3,
    });
    x[col] = dn.v_min_sq - 0.01;
    let rep = verify_solution(&inst, Mode::Deterministic(0), &x);
    let hit = rep
        .violations
        .iter()
        .find(|(t, _)| t.family == Family::Bound && t.a as usize == col)
        .unwrap();
    assert!((hit.1 - 0.01).abs() < 1e-12);
}

#[test]
fn wrong_length_is_reported() {
    let inst = tiny(1, 1);
    let rep = verify_solution(&inst, Mode::Deterministic(0), &[0.0; 3]);
    assert!(!rep.is_feasible());
    assert_eq!(rep.length_mismatch.map(|p| p.1), Some(3));
}

#[test]
fn idle_ev_with_zero_prices_adds_nothing() {
    let mut inst = tiny(3, 1);
    inst.fleet.charge_price = 0.0;
    inst.fleet.discharge_price = 0.0;
    inst.fleet.evs[0].start = 1;
    inst.schedule.jobs = (1..=inst.spans())
        .map(|s| Job {
            ev: 0,
            node: 1,
            span: s,
        })
        .collect();
    let (m, x) = optimum(&inst, Mode::Deterministic(0));
    let ev_cost: f64 = m
        .index
        .keys()
        .iter()
        .enumerate()
        .filter(|(_, k)| matches!(k, VarKey::ChargeP { .. } | VarKey::DischargeP { .. }))
        .map(|(c, _)| m.objective[c] * x[c])
        .sum();
    assert_eq!(ev_cost, 0.0);
    assert!(verify_solution(&inst, Mode::Deterministic(0), &x).is_feasible());
}

#[test]
fn stochastic_objective_decomposes_by_scenario() {
    for seed in 0..3 {
        let inst = tiny_scenarios(seed, 2, 3);
        let (m, x) = optimum(&inst, Mode::Stochastic);
        let total = m.objective_value(&x);
        let mut sum = 0.0;
        for sc in 0..3 {
            let det = build_model(&inst, Mode::Deterministic(sc)).unwrap();
            sum += inst.scenarios.probabilities[sc]
                * det.objective_value(&m.index.scenario_slice(&x, sc));
        }
        assert!((total - sum).abs() <= 1e-9, "{total} vs {sum}");
        assert!(verify_solution(&inst, Mode::Stochastic, &x).is_feasible());
    }
}

fn agreement(inst: &ProblemInstance, mode: Mode, x: &[f64]) -> Result<(), TestCaseError> {
    let m = build_model(inst, mode).unwrap();
    let model: BTreeMap<Tag, f64> = m.residuals(x).into_iter().collect();
    let verify: BTreeMap<Tag, f64> = evaluate_constraints(inst, mode, x)
        .into_iter()
        .filter(|(t, _)| t.family != Family::Integrality)
        .collect();
    prop_assert_eq!(
        model.len(),
        m.rows.len() + m.n_cols(),
        "row tags are unique"
    );
    prop_assert_eq!(
        model.keys().collect::<Vec<_>>(),
        verify.keys().collect::<Vec<_>>()
    );
    for (tag, r) in &model {
        prop_assert!(
            (r - verify[tag]).abs() <= 1e-9,
            "{:?}: {} vs {}",
            tag,
            r,
            verify[tag]
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verifier_agrees_with_model_rows(seed in 0u64..1000, evs in 1usize..4, stochastic in any::<bool>(), noise in proptest::collection::vec(-1.0f64..2.0, 512)) {
        let inst = if stochastic { tiny_scenarios(seed, evs, 2) } else { tiny(seed, evs) };
        let mode = if stochastic { Mode::Stochastic } else { Mode::Deterministic(0) };
        let m = build_model(&inst, mode).unwrap();
        let x: Vec<f64> = (0..m.n_cols())
            .map(|c| {
                let u = noise[c % noise.len()];
                let (lo, hi) = (m.lower[c].max(-1e3), m.upper[c].min(1e3));
                lo + (hi - lo) * u
            })
            .collect();
        agreement(&inst, mode, &x)?;
    }
}

#[test]
fn verifier_agrees_at_optimum() {
    let inst = tiny(21, 3);
    let (_, x) = optimum(&inst, Mode::Deterministic(0));
    agreement(&inst, Mode::Deterministic(0), &x).unwrap();
}
