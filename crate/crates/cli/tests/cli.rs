use std::path::Path;
use std::process::{Command, Output};

fn cprm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cprm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_wall_env(path: &Path) {
    // one solid wall at x in [0.45, 0.55] with a gap at y in [0.4, 0.6]
    let env = critical_prm::Environment::new(
        2,
        vec![
            critical_prm::Aabb::new(&[0.45, 0.0], &[0.55, 0.4]).unwrap(),
            critical_prm::Aabb::new(&[0.45, 0.6], &[0.55, 1.0]).unwrap(),
        ],
        0,
    )
    .unwrap();
    critical_prm::io::save_env(&env, path).unwrap();
}

#[test]
fn gen_envs_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cprm(&["gen-envs", "--count", "3", "--seed", "9", "--out-dir", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for i in 0..3 {
        let name = format!("env_{i:04}.json");
        let x = std::fs::read(a.join(&name)).unwrap();
        let y = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let first = std::fs::read(a.join("env_0000.json")).unwrap();
    let second = std::fs::read(a.join("env_0001.json")).unwrap();
    assert_ne!(first, second);
}

#[test]
fn goal_inside_obstacle_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    write_wall_env(&env);
    let o = cprm(&[
        "plan", "--env", s(&env), "--method", "uniform", "--n", "100", "--query", "0.1,0.5:0.5,0.2:0.02",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("goal region infeasible"), "{}", stderr(&o));
}

#[test]
fn selftest_passes() {
    let o = cprm(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 4, "{out}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cprm(&["plan", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(cprm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cprm(&[]).status.code(), Some(2));
}

#[test]
fn version_prints() {
    let o = cprm(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn missing_input_file_is_a_domain_error() {
    let o = cprm(&["build-prm", "--env", "/nonexistent/env.json", "--n", "10", "--out", "/tmp/x.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plan_writes_result_json() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    let out = dir.path().join("result.json");
    write_wall_env(&env);
    let o = cprm(&[
        "plan", "--env", s(&env), "--method", "hybrid", "--n", "300", "--seed", "2",
        "--query", "0.1,0.5:0.9,0.5:0.02", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["success"], true);
    assert!(v["cost"].as_f64().unwrap() >= 0.78 - 1e-9);
    for k in ["sample", "predict", "connect", "search"] {
        assert!(v["timing"][k].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn critical_plan_without_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    write_wall_env(&env);
    let o = cprm(&["plan", "--env", s(&env), "--method", "critical", "--n", "100", "--query", "0.1,0.5:0.9,0.5:0.02"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model"));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("envs");
    std::fs::write(&cfg, format!(r#"{{"count": 2, "seed": 5, "out-dir": "{}"}}"#, s(&out))).unwrap();
    let o = cprm(&["gen-envs", "--config", s(&cfg), "--count", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("env_0000.json").exists());
    assert!(!out.join("env_0001.json").exists());
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let ok = |o: Output| assert!(o.status.success(), "{}", stderr(&o));
    ok(cprm(&["gen-envs", "--count", "4", "--seed", "1", "--out-dir", s(&p("envs"))]));
    ok(cprm(&[
        "build-prm", "--env", s(&p("envs").join("env_0000.json")), "--n", "200", "--out", s(&p("rm.json")),
    ]));
    let (rm, env_ref) = critical_prm::io::load_roadmap(&p("rm.json")).unwrap();
    assert_eq!((rm.len(), env_ref.as_str()), (200, "env_0000.json"));

    ok(cprm(&[
        "--threads", "2", "build-dataset", "--envs-dir", s(&p("envs")), "--n", "300", "--m", "50",
        "--seed", "3", "--out", s(&p("data.jsonl")),
    ]));
    let ds = critical_prm::io::load_dataset(&p("data.jsonl")).unwrap();
    assert!(ds.is_balanced());

    ok(cprm(&[
        "train", "--dataset", s(&p("data.jsonl")), "--arch", "100,16,1", "--epochs", "2",
        "--out-model", s(&p("model.json")),
    ]));
    let model = critical_prm::io::load_model(&p("model.json")).unwrap();
    assert_eq!(model.layer_sizes(), &[100, 16, 1]);

    let bench = r#"{"family": {"kind": "narrow-passage", "dim": 2, "num_walls": 3, "gaps_per_wall": 2, "gap_width": 0.03},
            "methods": ["uniform", "critical"], "n_values": [100, 200], "env_seeds": [1, 2],
            "problems_per_env": 3, "model": "model.json"}"#;
    std::fs::write(p("bench.json"), bench).unwrap();
    ok(cprm(&[
        "bench", "--config", s(&p("bench.json")), "--out-records", s(&p("records.csv")),
        "--out-curves", s(&p("curves.csv")),
    ]));
    let records = std::fs::read_to_string(p("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2 * 2 * 3);
    let curves = std::fs::read_to_string(p("curves.csv")).unwrap();
    assert!(curves.starts_with("method,n,mean_time_s,success_rate,mean_cost\n"));
    assert_eq!(curves.lines().count(), 1 + 4);
    assert!(p("curves_unamortized.csv").exists());

    ok(cprm(&[
        "plan", "--env", s(&p("envs").join("env_0001.json")), "--model", s(&p("model.json")), "--n", "300",
        "--query", "0.05,0.5:0.95,0.5:0.02", "--out", s(&p("plan.json")),
    ]));
}
