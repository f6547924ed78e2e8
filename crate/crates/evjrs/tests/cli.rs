use std::path::Path;
use std::process::{Command, Output};

fn evjrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evjrs"))
        .args(args)
        .env_remove("EVJRS_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = evjrs(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn last_hash(out: &str) -> String {
    out.lines()
        .last()
        .unwrap()
        .rsplit(' ')
        .next()
        .unwrap()
        .to_string()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn gen_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let a = ok(&[
        "gen",
        "--seed",
        "7",
        "--fleet",
        "2",
        "--out",
        &s(&d.path().join("a")),
    ]);
    let b = ok(&[
        "gen",
        "--seed",
        "7",
        "--fleet",
        "2",
        "--out",
        &s(&d.path().join("b")),
    ]);
    assert_eq!(last_hash(&a), last_hash(&b));
    let c = ok(&[
        "gen",
        "--seed",
        "8",
        "--fleet",
        "2",
        "--out",
        &s(&d.path().join("c")),
    ]);
    assert_ne!(last_hash(&a), last_hash(&c));
    assert!(a.lines().all(|l| l.starts_with("output ")));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["solve", "--bogus"][..],
        &["frobnicate"],
        &["gen", "--out", "x"],
        &["solve", "--instance", "i", "--model", "m", "--no-model"],
    ] {
        let o = evjrs(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(
            String::from_utf8_lossy(&o.stderr).contains("Usage"),
            "{args:?}"
        );
    }
    assert_eq!(evjrs(&["--help"]).status.code(), Some(0));
}

#[test]
fn failures_print_one_categorised_line() {
    let o = evjrs(&["solve", "--instance", "/nonexistent/i.json"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: io: "), "{err}");
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\"format\": \"evjrs-instance\", \"version\": 1, \"instance\": [}",
    )
    .unwrap();
    let o = evjrs(&["solve", "--instance", &s(&bad)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: format: "));
}

#[test]
fn corrupted_solution_fails_verification() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "gen",
        "--seed",
        "3",
        "--fleet",
        "2",
        "--scenarios",
        "2",
        "--out",
        &s(&d.path().join("g")),
    ]);
    let inst = s(&d.path().join("g/instance-00000.json"));
    let sol = d.path().join("sol.json");
    ok(&["solve", "--instance", &inst, "--out", &s(&sol)]);
    assert!(ok(&["verify", "--instance", &inst, "--solution", &s(&sol)]).contains("feasible"));
    let mut file = evjrs::io::read_solution(&sol).unwrap();
    let before = std::fs::read(&sol).unwrap();
    file.values[0] = 0.5;
    let last = file.values.len() - 1;
    file.values[last] += 0.2;
    let bad = d.path().join("bad.json");
    evjrs::io::write_solution(&bad, &file).unwrap();
    let o = evjrs(&["verify", "--instance", &inst, "--solution", &s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(
        out.lines().filter(|l| l.starts_with("violation ")).count() >= 2,
        "{out}"
    );
    assert!(out.contains("Integrality"));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: verification: "));
    assert_eq!(std::fs::read(&sol).unwrap(), before);
}

#[test]
fn full_workflow_and_model_identity() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| s(&d.path().join(n));
    ok(&[
        "gen",
        "--seed",
        "1",
        "--fleet",
        "2",
        "--count",
        "10",
        "--out",
        &p("g"),
    ]);
    let label = ok(&["label", "--instances", &p("g"), "--out", &p("data")]);
    assert!(label.contains("labeled 10 samples from 10 instances"));
    let train = ok(&[
        "train",
        "--dataset",
        &p("data"),
        "--out",
        &p("raw.ckpt"),
        "--epochs",
        "4",
        "--d-model",
        "16",
        "--heads",
        "2",
    ]);
    assert_eq!(train.lines().filter(|l| l.starts_with("epoch ")).count(), 4);
    let cal = ok(&[
        "calibrate",
        "--model",
        &p("raw.ckpt"),
        "--dataset",
        &p("data"),
        "--out",
        &p("model.ckpt"),
    ]);
    assert!(cal.contains("thr_0 "));
    let o = evjrs(&[
        "calibrate",
        "--model",
        &p("raw.ckpt"),
        "--dataset",
        &p("data"),
        "--out",
        &p("raw.ckpt"),
    ]);
    assert_eq!(o.status.code(), Some(5));

    // The uncalibrated checkpoint has vacuous thresholds, so it fixes nothing.
    let inst = p("g/instance-00003.json");
    let plain = ok(&["solve", "--instance", &inst, "--no-model"]);
    let pruned = ok(&["solve", "--instance", &inst, "--model", &p("raw.ckpt")]);
    assert!(pruned.contains("fixed 0 of"));
    let (a, b) = (value(&plain, "objective "), value(&pruned, "objective "));
    assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
    let calibrated = ok(&[
        "solve",
        "--instance",
        &inst,
        "--model",
        &p("model.ckpt"),
        "--out",
        &p("s.json"),
    ]);
    assert!(ok(&["verify", "--instance", &inst, "--solution", &p("s.json")]).contains("feasible"));
    assert!(value(&calibrated, "objective ") >= a - 1e-6 * a.abs().max(1.0));

    let eval = ok(&[
        "evaluate",
        "--instances",
        &p("g"),
        "--model",
        &p("model.ckpt"),
        "--out",
        &p("m.csv"),
    ]);
    assert!(eval.contains("ACC_0,ACC_1,r_bar,l_bar,feas"));
    let csv = std::fs::read_to_string(d.path().join("m.csv")).unwrap();
    assert_eq!(
        csv.lines()
            .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
            .count(),
        11
    );
    let none = ok(&["evaluate", "--instances", &p("g"), "--no-model"]);
    assert!(none.contains("NA,NA,0,0,100,10,10"), "{none}");
}

#[test]
fn verbose_solve_logs_nodes_and_exports_lp() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "2", "--fleet", "2", "--out", &s(d.path())]);
    let inst = s(&d.path().join("instance-00000.json"));
    let lp = d.path().join("m.lp");
    let out = ok(&[
        "solve",
        "--instance",
        &inst,
        "--scenario",
        "0",
        "--verbose",
        "--lp",
        &s(&lp),
    ]);
    let nodes = out.lines().filter(|l| l.starts_with("node ")).count();
    assert!(nodes >= 1);
    let reported: usize = out
        .lines()
        .find_map(|l| l.strip_prefix("nodes "))
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(nodes, reported);
    assert!(std::fs::read_to_string(&lp).unwrap().contains("Binaries"));
}

#[test]
fn config_file_and_flag_precedence() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| s(&d.path().join(n));
    ok(&[
        "gen",
        "--seed",
        "4",
        "--fleet",
        "2",
        "--count",
        "4",
        "--out",
        &p("g"),
    ]);
    ok(&["label", "--instances", &p("g"), "--out", &p("data")]);
    std::fs::write(
        d.path().join("c.toml"),
        "[train]\nepochs = 2\n[model]\nd_model = 8\nheads = 2\n",
    )
    .unwrap();
    let from_file = ok(&[
        "--config",
        &p("c.toml"),
        "train",
        "--dataset",
        &p("data"),
        "--out",
        &p("a.ckpt"),
    ]);
    assert_eq!(
        from_file
            .lines()
            .filter(|l| l.starts_with("epoch "))
            .count(),
        2
    );
    let flag_wins = ok(&[
        "--config",
        &p("c.toml"),
        "train",
        "--dataset",
        &p("data"),
        "--out",
        &p("b.ckpt"),
        "--epochs",
        "3",
    ]);
    assert_eq!(
        flag_wins
            .lines()
            .filter(|l| l.starts_with("epoch "))
            .count(),
        3
    );
    let via_env = Command::new(env!("CARGO_BIN_EXE_evjrs"))
        .args(["train", "--dataset", &p("data"), "--out", &p("c.ckpt")])
        .env("EVJRS_CONFIG", p("c.toml"))
        .output()
        .unwrap();
    assert!(via_env.status.success());
    assert_eq!(
        String::from_utf8_lossy(&via_env.stdout)
            .lines()
            .filter(|l| l.starts_with("epoch "))
            .count(),
        2
    );
    std::fs::write(d.path().join("bad.toml"), "[train]\nepoch = 2\n").unwrap();
    let o = evjrs(&[
        "--config",
        &p("bad.toml"),
        "train",
        "--dataset",
        &p("data"),
        "--out",
        &p("d.ckpt"),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn experiment_without_unseen_counts_is_rejected() {
    let o = evjrs(&["experiment", "--multipliers", "1"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no unseen counts"));
}
