use evjrs_core::instances::{generate_instance, presets, Job, ProblemInstance};
use evjrs_core::mip::{apply_fixings, build_model, verify_solution, Mode, PartialAssignment};
use evjrs_core::solver::*;

fn tiny(seed: u64, evs: usize) -> ProblemInstance {
    generate_instance(seed, evs, &presets::tiny_config()).unwrap()
}

const CAP: u64 = 1_000_000;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn mip_matches_enumeration_and_relaxation_bounds_it() {
    let cfg = SolveConfig::default();
    for seed in 100..112 {
        let inst = tiny(seed, 2);
        let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
        let r = solve_mip(&m, &cfg);
        let b = brute_force_solve(&inst, Mode::Deterministic(0), CAP, &cfg).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        assert_eq!(b.status, MipStatus::Optimal);
        assert!(
            rel(r.objective, b.objective) <= 1e-6,
            "seed {seed}: {} vs {}",
            r.objective,
            b.objective
        );
        let lp = solve_lp(&m, &cfg);
        assert!(lp.objective <= b.objective + 1e-9);
        for x in [&r.values, &b.values] {
            let rep = verify_solution(&inst, Mode::Deterministic(0), x);
            assert!(
                rep.is_feasible() && rep.max_residual <= 1e-6,
                "{:?}",
                rep.violations
            );
        }
        assert!(r.bound_trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn stochastic_enumeration_matches_branch_and_bound() {
    let cfg = SolveConfig::default();
    let gen = evjrs_core::instances::GenConfig {
        scenarios: 2,
        ..presets::tiny_config()
    };
    let inst = generate_instance(5, 2, &gen).unwrap();
    let m = build_model(&inst, Mode::Stochastic).unwrap();
    let r = solve_mip(&m, &cfg);
    let b = brute_force_solve(&inst, Mode::Stochastic, CAP, &cfg).unwrap();
    assert!(rel(r.objective, b.objective) <= 1e-6);
    assert!(verify_solution(&inst, Mode::Stochastic, &b.values).is_feasible());
}

#[test]
fn fully_fixed_model_is_one_lp() {
    let inst = tiny(3, 2);
    let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
    let cfg = SolveConfig::default();
    let opt = solve_mip(&m, &cfg);
    let fixed = apply_fixings(&m, &PartialAssignment::from_values(&m, &opt.values)).unwrap();
    let r = solve_mip(&fixed, &cfg);
    assert_eq!((r.nodes, r.branched), (1, 0));
    assert!(rel(r.objective, opt.objective) <= 1e-9);
    assert!(r.nodes <= opt.nodes);
}

#[test]
fn fixings_from_optimum_never_cost_nodes() {
    let cfg = SolveConfig::default();
    for seed in 200..206 {
        let inst = tiny(seed, 2);
        let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
        let opt = solve_mip(&m, &cfg);
        // Half of the label: every other binary.
        let mut pa = PartialAssignment::from_values(&m, &opt.values);
        let keep: Vec<usize> = pa.fixed.keys().copied().filter(|c| c % 2 == 0).collect();
        pa.fixed.retain(|c, _| keep.contains(c));
        let r = solve_mip(&apply_fixings(&m, &pa).unwrap(), &cfg);
        assert!(rel(r.objective, opt.objective) <= cfg.mip_gap);
    }
}

#[test]
fn single_route_schedule() {
    let mut inst = tiny(1, 1);
    let spans = inst.spans();
    inst.fleet.evs[0].start = 1;
    inst.congestion.congested = vec![false; spans as usize];
    // Pinned at node 1 for spans 1..3, then at 2 from span 4 on: the only
    // way is the direct hop during span 3.
    inst.schedule.jobs = (1..=spans)
        .map(|s| Job {
            ev: 0,
            node: if s <= 3 { 1 } else { 2 },
            span: s,
        })
        .collect();
    let tsn = inst.tsn().unwrap();
    let routes = enumerate_routes(&inst, &tsn, 0);
    assert_eq!(routes.len(), 1);
}

#[test]
fn zero_price_zero_load_costs_nothing() {
    let mut inst = tiny(4, 2);
    inst.fleet.charge_price = 0.0;
    inst.fleet.discharge_price = 0.0;
    for g in &mut inst.network.distribution.dgs {
        g.fuel_cost = 0.0;
    }
    for row in inst
        .loads
        .active
        .iter_mut()
        .chain(inst.loads.reactive.iter_mut())
    {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    inst.scenarios
        .solar
        .iter_mut()
        .flatten()
        .flatten()
        .for_each(|v| *v = 0.0);
    let b = brute_force_solve(&inst, Mode::Deterministic(0), CAP, &SolveConfig::default()).unwrap();
    assert_eq!(b.status, MipStatus::Optimal);
    assert!(b.objective.abs() < 1e-12);
}

#[test]
fn enumeration_cap_is_a_refusal() {
    let inst = tiny(2, 3);
    let err =
        brute_force_solve(&inst, Mode::Deterministic(0), 2, &SolveConfig::default()).unwrap_err();
    assert!(matches!(err, BruteForceError::CapExceeded { cap: 2, .. }));
}

#[test]
fn branch_and_bound_is_reproducible_and_logs_every_node() {
    let inst = tiny(17, 3);
    let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
    let cfg = SolveConfig::default();
    let mut lines = Vec::new();
    let a = solve_mip_with(&m, &cfg, &NoClock, &mut |n| lines.push(n.to_string()));
    let b = solve_mip(&m, &cfg);
    assert_eq!(a, b);
    assert_eq!(lines.len() as u64, a.nodes);
    assert!(lines[0].starts_with("node 0 bound"));
}

#[test]
fn node_limit_returns_limit_status() {
    let inst = tiny(2, 4);
    let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
    let full = solve_mip(&m, &SolveConfig::default());
    if full.nodes > 1 {
        let r = solve_mip(
            &m,
            &SolveConfig {
                node_limit: 1,
                ..SolveConfig::default()
            },
        );
        assert_eq!(r.status, MipStatus::NodeLimit);
        assert_eq!(r.nodes, 1);
    }
}

struct Stepper(std::cell::Cell<f64>);

impl Clock for Stepper {
    fn now(&self) -> f64 {
        let t = self.0.get();
        self.0.set(t + 1.0);
        t
    }
}

#[test]
fn time_limit_returns_limit_status() {
    let inst = tiny(2, 4);
    let m = build_model(&inst, Mode::Deterministic(0)).unwrap();
    let cfg = SolveConfig {
        time_limit: Some(0.5),
        ..SolveConfig::default()
    };
    let r = solve_mip_with(&m, &cfg, &Stepper(std::cell::Cell::new(0.0)), &mut |_| {});
    assert_eq!(r.status, MipStatus::TimeLimit);
}

#[test]
fn config_validation() {
    assert!(SolveConfig::default().validate().is_ok());
    assert!(SolveConfig {
        feasibility_tol: 0.0,
        ..SolveConfig::default()
    }
    .validate()
    .is_err());
    assert!(SolveConfig {
        workers: 0,
        ..SolveConfig::default()
    }
    .validate()
    .is_err());
}
