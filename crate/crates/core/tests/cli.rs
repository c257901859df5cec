use std::path::Path;
use std::process::{Command, Output};

const RECIPES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/recipes");

fn hoeffding(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoeffding"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn selftest_passes() {
    let out = hoeffding(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn unknown_flag_is_an_error() {
    assert_eq!(hoeffding(&["detect", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(hoeffding(&["threshold-compare", "--n-grid", "1,100"]).status.code(), Some(1));
}

#[test]
fn missing_input_names_path() {
    let out = hoeffding(&["estimate", "--flows", "/no/such/flows.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("/no/such/flows.csv"));
}

#[test]
fn small_threshold_compare() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let out = hoeffding(&[
        "threshold-compare",
        "--n-states",
        "2",
        "--n-grid",
        "100,1000",
        "--T",
        "2000",
        "--out",
        path(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("n,eta_sv,eta_wc,eta_mc"));
    assert_eq!(text.lines().count(), 3);
    assert!(String::from_utf8(out.stderr).unwrap().contains("relative error"));
}

#[test]
fn simulate_estimate_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let flows = dir.path().join("flows.csv");
    let pl = dir.path().join("pl.json");
    let reports = dir.path().join("reports.jsonl");
    let summary = dir.path().join("summary.csv");
    let s1 = format!("{RECIPES}/scenario1.json");

    let out = hoeffding(&["simulate", "--config", &s1, "--out", path(&flows)]);
    assert_eq!(out.status.code(), Some(0));
    let again = hoeffding(&["simulate", "--config", &s1]);
    assert_eq!(std::fs::read(&flows).unwrap(), again.stdout);

    let out = hoeffding(&["estimate", "--config", &s1, "--flows", path(&flows), "--out", path(&pl)]);
    assert_eq!(out.status.code(), Some(0));

    let out = hoeffding(&[
        "detect",
        "--config",
        &s1,
        "--flows",
        path(&flows),
        "--pl",
        path(&pl),
        "--out",
        path(&reports),
        "--summary",
        path(&summary),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let jsonl = std::fs::read_to_string(&reports).unwrap();
    let csv = std::fs::read_to_string(&summary).unwrap();
    assert_eq!(jsonl.lines().count() + 1, csv.lines().count());

    // The same run without the PL file calibrates in-process and must agree.
    let inline = hoeffding(&["detect", "--config", &s1, "--flows", path(&flows)]);
    assert_eq!(inline.status.code(), Some(2));
    assert_eq!(String::from_utf8(inline.stdout).unwrap(), jsonl);

    let quiet = hoeffding(&[
        "detect", "--config", &s1, "--flows", path(&flows), "--method", "fixed", "--threshold", "1e9",
    ]);
    assert_eq!(quiet.status.code(), Some(0));
}

#[test]
fn estimate_from_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let symbols = dir.path().join("z.csv");
    let mut text = String::from("symbol\n");
    let states = [0usize, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0];
    for w in states.windows(2).cycle().take(500) {
        text.push_str(&format!("{}\n", w[0] * 2 + w[1] + 1));
    }
    std::fs::write(&symbols, text).unwrap();
    let out = hoeffding(&["estimate", "--symbols", path(&symbols), "--n-states", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["quantizer"].is_null());
    assert_eq!(v["pls"][0]["n_states"], 2);
}

#[test]
fn null_traffic_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("null.json");
    let mut r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{RECIPES}/scenario1.json")).unwrap())
            .unwrap();
    r["scenario"]["anomaly"] = serde_json::Value::Null;
    std::fs::write(&recipe, r.to_string()).unwrap();
    let out = hoeffding(&["detect", "--config", path(&recipe)]);
    assert_eq!(out.status.code(), Some(0));
}
