use std::path::PathBuf;
use std::process::{Command, Output};

fn scq(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_scq")).args(args).output().unwrap();
    assert!(out.status.success(), "scq {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("scq-cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn csv_column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

const SWEEP: &[&str] =
    &["simulate", "--scenario", "quantized-uniform", "--n", "400", "--k", "8", "--q", "0,0.05", "--s-size", "400", "--trials", "2"];

#[test]
fn same_seed_gives_identical_csv() {
    let run = |seed: &str| scq(&[SWEEP, &["--seed", seed]].concat()).stdout;
    let a = run("17");
    assert_eq!(a, run("17"));
    assert_ne!(a, run("18"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(csv_column(&text, "queries").iter().all(|q| q == "79800"));
}

#[test]
fn outputs_land_next_to_the_csv() {
    let csv = tmp("sweep.csv");
    let svg = tmp("sweep.svg");
    scq(&[SWEEP, &["--seed", "1", "--out", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap()]].concat());
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(csv.with_extension("json")).unwrap()).unwrap();
    assert_eq!(doc["summary"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn bounds_report_is_json() {
    let out = scq(&["bounds", "--scenario", "quantized-uniform", "--n", "2000", "--k", "6", "--delta", "2"]);
    let v = json(&out);
    let s = v["s_sufficient"].as_f64().unwrap();
    assert!((s - 2_643.283_637_908_446_5).abs() < 1e-6);
    assert_eq!(v["s_used"].as_u64(), Some(2000));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_scq"))
        .args(["simulate", "--scenario", "quantized-uniform", "--q", "0.7"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn corpus_ingests_with_expected_shape() {
    let path = tmp("genres.csv");
    let matrix = tmp("genres.txt");
    scq(&["make-corpus", "--out", path.to_str().unwrap(), "--seed", "4"]);
    let v = json(&scq(&["ingest", path.to_str().unwrap(), "--delta-max", "2", "--matrix-out", matrix.to_str().unwrap()]));
    assert_eq!(v["n"], 3470);
    assert_eq!(v["k"], 5);
    assert_eq!(v["dropped"], 1612);
    let text = std::fs::read_to_string(matrix).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("3470 5 2 external"));
    assert!(lines.all(|l| l.len() == 5 && (1..=2).contains(&l.matches('1').count())));
}

#[test]
fn recorded_log_replays_to_the_same_recovery() {
    let log = tmp("responses.log");
    let csv = tmp("replay.csv");
    let sim = tmp("replay-sim.txt");
    scq(&[
        "simulate", "--scenario", "quantized-uniform", "--n", "300", "--k", "8", "--s-size", "300", "--seed", "5",
        "--out", csv.to_str().unwrap(), "--record-log", log.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let seed = &csv_column(&text, "seed")[0];
    let success = &csv_column(&text, "success")[0];
    let v = json(&scq(&[
        "replay", "--log", log.to_str().unwrap(), "--scenario", "quantized-uniform", "--n", "300", "--k", "8",
        "--s-size", "300", "--seed", seed, "--out", sim.to_str().unwrap(),
    ]));
    assert_eq!(v["responses_available"], 44850);
    assert_eq!(v["responses_used"], 44850);
    assert_eq!(v["recovered"].as_bool().unwrap().to_string(), *success);
    if success == "true" {
        let rows: Vec<_> = std::fs::read_to_string(sim).unwrap().lines().map(String::from).collect();
        assert_eq!(rows.len(), 300);
        assert!(rows.iter().all(|r| r.split(' ').count() == 300));
    }
}
