use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_madshield")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

#[test]
fn opf_on_triangle_costs_one() {
    let o = run(&["opf", "--case", "tri3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["cost_dollars_per_hr"], 1.0);
    assert_eq!(v["feasible"], true);
    assert_eq!(v["alpha_bounds"]["hat"], serde_json::Value::Null);
}

#[test]
fn safe_on_new_england() {
    let o = run(&["safe", "--case", "ne39", "--alpha", "0.08", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let cost = json(&o)["cost_dollars_per_hr"].as_f64().unwrap();
    assert!((cost - 43628.0).abs() < 0.01 * 43628.0, "{cost}");
}

#[test]
fn infeasible_immune_exits_two_with_report() {
    let o = run(&["immune", "--case", "ieee30", "--alpha", "0.3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["feasible"], false);
    assert_eq!(v["cost_dollars_per_hr"], serde_json::Value::Null);
}

#[test]
fn errors_exit_one() {
    let o = run(&["opf", "--case", "no/such/case.m"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = run(&["verify-secondary", "--case", "ieee57", "--alpha", "0.1", "--method", "bruteforce"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("enumeration limit"));
    let o = run(&["safe", "--case", "tri3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn alpha_and_bounds_file_are_exclusive() {
    let o = run(&["safe", "--case", "tri3", "--alpha", "0.1", "--bounds-file", "x.csv"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn controller_verdict_agrees_with_enumeration() {
    let a = json(&run(&["verify-secondary", "--case", "tri3", "--alpha", "0.1", "--method", "gamma-beta", "--format", "json"]));
    let b = json(&run(&["verify-secondary", "--case", "tri3", "--alpha", "0.1", "--method", "bruteforce", "--format", "json"]));
    assert_eq!(b["verdict"], "controllable");
    assert!(a["verdict"] == "controllable" || a["verdict"] == "inconclusive");
    assert!(a["eta"].as_f64().unwrap() <= 1.0 + 1e-6);
}

#[test]
fn uncontrollable_envelope_exits_two() {
    let o = run(&["verify-secondary", "--case", "mixed4", "--alpha", "1", "--method", "bruteforce", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["verdict"], "uncontrollable");
}

#[test]
fn alpha_bounds_chain_on_triangle() {
    let v = json(&run(&["alpha-bounds", "--case", "tri3", "--exact-max", "--format", "json"]));
    let b = &v["alpha_bounds"];
    let f = |k: &str| b[k].as_f64().unwrap();
    assert!(f("star") <= f("beta") + 1e-6 && f("beta") <= f("gamma_beta") + 1e-6 && f("gamma_beta") <= f("hat") + 1e-6);
    assert!(f("max") <= f("hat") + 1e-6);
}

#[test]
fn reports_are_byte_identical() {
    for args in [
        &["immune", "--case", "ring5", "--alpha", "0.1", "--update-rule", "scale-0.95"][..],
        &["verify-secondary", "--case", "ring5", "--alpha", "0.2", "--method", "sample", "--seed", "7"][..],
        &["alpha-bounds", "--case", "ring5", "--format", "json"][..],
    ] {
        assert_eq!(stdout(&run(args)), stdout(&run(args)), "{args:?}");
    }
}

#[test]
fn bounds_file_matches_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bounds.csv");
    // 10% of the ring5 demands.
    std::fs::write(&path, "bus_id,delta_max_mw\n2,2\n3,12\n5,8\n").unwrap();
    let a = json(&run(&["safe", "--case", "ring5", "--alpha", "0.1", "--format", "json"]));
    let b = json(&run(&["safe", "--case", "ring5", "--bounds-file", path.to_str().unwrap(), "--format", "json"]));
    assert_eq!(a["cost_dollars_per_hr"], b["cost_dollars_per_hr"]);
}

#[test]
fn output_file_and_debug_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let lps = dir.path().join("lps");
    let o = run(&["opf", "--case", "tri3", "--format", "json", "--output", out.to_str().unwrap(), "--debug-lp", lps.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["case"], "tri3");
    let dumped: Vec<_> = std::fs::read_dir(&lps).unwrap().collect();
    assert!(!dumped.is_empty());
}

#[test]
fn parse_round_trips_through_native_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ieee14.toml");
    let o = run(&["parse", "--case", "ieee14", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let a = json(&run(&["opf", "--case", "ieee14", "--format", "json"]));
    let b = json(&run(&["opf", "--case", path.to_str().unwrap(), "--format", "json"]));
    assert_eq!(a["cost_dollars_per_hr"], b["cost_dollars_per_hr"]);
    assert_eq!(a["flows"], b["flows"]);
}

#[test]
fn flow_lists_every_line() {
    let o = run(&["flow", "--case", "ring5", "--alpha", "0.1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["flows"].as_array().unwrap().len(), 6);
    assert!(v["notes"][0].as_str().unwrap().contains("worst change"));
}
