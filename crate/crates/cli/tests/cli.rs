mod support;

use std::fs;
use std::net::TcpListener;

use serde_json::Value;
use support::*;

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = simhra(&[
        "run",
        "--scenario",
        "tmi1979",
        "--backend",
        "scripted",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("tmi1979-s0.jsonl").exists());
    assert!(out.join("tmi1979-s0.jsonl.moderator").exists());
    assert!(out.join("manifest.json").exists());
    assert!(out.join("scenario.toml").exists());

    // Same run id again needs --force; a new seed adds a record.
    let again = simhra(&["run", "--scenario", "tmi1979", "--out", p(&out)]);
    assert_eq!(code(&again), 1);
    let o = simhra(&[
        "run",
        "--scenario",
        "tmi1979",
        "--seed",
        "5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn run_with_script_file() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.toml");
    fs::write(
        &script,
        simhra::backend::scripted::builtin_script_source("chernobyl1986").unwrap(),
    )
    .unwrap();
    let o = simhra(&[
        "run",
        "--scenario",
        "chernobyl1986",
        "--script",
        p(&script),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn unknown_scenario_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = simhra(&["run", "--scenario", "three-mile", "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("three-mile"));
}

#[test]
fn llm_without_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = simhra(&[
        "run",
        "--scenario",
        "tmi1979",
        "--backend",
        "llm",
        "--endpoint",
        "http://127.0.0.1:9/v1",
        "--model",
        "m",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("SIMHRA_API_KEY"));
}

#[test]
fn unreachable_endpoint_is_infrastructure_failure() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("SIMHRA_API_KEY", "k")
        .env("SIMHRA_API_BASE", format!("http://{addr}/v1"))
        .args([
            "run",
            "--scenario",
            "chernobyl1986",
            "--backend",
            "llm",
            "--model",
            "m",
            "--out",
            p(dir.path()),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(dir.path().join("chernobyl1986-s0.jsonl.partial").exists());
    assert!(!dir.path().join("chernobyl1986-s0.jsonl").exists());
}

#[test]
fn bad_flags_exit_one() {
    assert_eq!(code(&simhra(&["batch", "--scenario", "tmi1979"])), 1);
    assert_eq!(code(&simhra(&["frobnicate"])), 1);
    assert_eq!(code(&simhra(&["--help"])), 0);
}

#[test]
fn batch_counts_and_overwrite_guard() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = simhra(&[
        "batch",
        "--scenario",
        "chernobyl1986",
        "--runs",
        "20",
        "--backend",
        "scripted",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["runs"].as_array().unwrap().len(), 20);

    let again = simhra(&[
        "batch",
        "--scenario",
        "chernobyl1986",
        "--runs",
        "20",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&again), 1);
    assert!(stderr(&again).contains("--force"));
    let forced = simhra(&[
        "batch",
        "--scenario",
        "chernobyl1986",
        "--runs",
        "2",
        "--out",
        p(&out),
        "--force",
    ]);
    assert_eq!(code(&forced), 0);

    assert_eq!(
        code(&simhra(&[
            "batch",
            "--scenario",
            "tmi1979",
            "--runs",
            "0",
            "--out",
            p(&dir.path().join("z"))
        ])),
        1
    );
}

#[test]
fn report_validate_stats_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    assert_eq!(
        code(&simhra(&[
            "batch",
            "--scenario",
            "tmi1979",
            "--runs",
            "2",
            "--out",
            p(&out)
        ])),
        0
    );

    // validate before report is a usage error
    assert_eq!(code(&simhra(&["validate", "--runs", p(&out)])), 1);

    let o = simhra(&["report", "--runs", p(&out), "--extractor", "rules"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("tmi1979-000.metrics.json").exists());
    assert!(out.join("tmi1979-001.metrics.json").exists());

    let o = simhra(&["validate", "--runs", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("100.0%"), "{}", stdout(&o));

    let o = simhra(&["stats", "--runs", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("radar.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,sim_norm,hist_norm");
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
}

#[test]
fn report_on_missing_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&simhra(&[
            "report",
            "--runs",
            p(&dir.path().join("absent"))
        ])),
        1
    );
    assert_eq!(code(&simhra(&["validate", "--runs", p(dir.path())])), 1);
}

#[test]
fn llm_report_against_unreachable_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    assert_eq!(
        code(&simhra(&[
            "batch",
            "--scenario",
            "tmi1979",
            "--runs",
            "1",
            "--out",
            p(&out)
        ])),
        0
    );
    let addr = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let o = bin()
        .env("SIMHRA_API_KEY", "k")
        .args([
            "report",
            "--runs",
            p(&out),
            "--extractor",
            "llm",
            "--model",
            "m",
            "--endpoint",
            &format!("http://{addr}/v1"),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    // The infra-failed extraction is excluded, leaving nothing to validate.
    assert_eq!(code(&simhra(&["validate", "--runs", p(&out)])), 1);
}

#[test]
fn validate_machine_output_on_constructed_set() {
    let dir = tempfile::tempdir().unwrap();
    let d = constructed_dir(dir.path(), "tmi1979", &tmi_outcome_set());
    let o = simhra(&["validate", "--runs", p(&d), "--format", "machine"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let row = &v["summaries"][0];
    assert_eq!(row["n_total"], 30);
    assert_eq!(row["n_valid"], 23);
    assert_eq!(row["n_json_fail"], 7);
    assert_eq!(row["n_pass"], 10);
    assert!(d.join("verdicts.json").exists());
}

#[test]
fn stats_alignment_row() {
    let dir = tempfile::tempdir().unwrap();
    let set: Vec<_> = [130.0, 134.8, 139.6]
        .iter()
        .map(|d| simhra::ExtractionOutcome::Valid(tmi(*d, 30.0, 4)))
        .collect();
    let d = constructed_dir(dir.path(), "tmi1979", &set);
    let o = simhra(&["stats", "--runs", p(&d)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ddt_row = stdout(&o)
        .lines()
        .find(|l| l.starts_with("DDT"))
        .unwrap()
        .to_string();
    assert!(
        ddt_row.contains("134.8") && ddt_row.contains("2.3%"),
        "{ddt_row}"
    );

    let o = simhra(&["stats", "--runs", p(&d), "--format", "machine"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["scenarios"][0]["radar"].as_array().unwrap().len(), 5);
}

#[test]
fn stats_attribution_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = constructed_dir(dir.path(), "tmi1979", &tmi_outcome_set());
    let o = simhra(&["stats", "--runs", p(&d)]);
    let text = stdout(&o);
    let ipr = text.lines().rfind(|l| l.starts_with("IPR")).unwrap();
    assert!(ipr.contains("100.0%"), "{ipr}");
}
