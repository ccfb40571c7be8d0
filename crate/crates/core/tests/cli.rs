//! End-to-end tests of the `carbonflow` binary: subcommand smoke runs,
//! worker-count determinism, and the exit-code taxonomy.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carbonflow"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// Generate a small case, then exercise every analysis subcommand on it.
fn generated_inputs(dir: &Path) -> (String, String) {
    run_ok(
        bin()
            .args(["generate", "--seed", "11", "--hours", "48", "--out"])
            .arg(dir.join("gen")),
    );
    let case = dir.join("gen/case.json");
    let scenario = dir.join("gen/scenario.csv");
    assert!(case.exists() && scenario.exists());
    (
        case.to_str().unwrap().to_string(),
        scenario.to_str().unwrap().to_string(),
    )
}

#[test]
fn simulate_writes_versioned_outputs_and_a_consistent_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (case, scenario) = generated_inputs(tmp.path());
    let config = write_config(
        tmp.path(),
        "sim.json",
        &format!(r#"{{"case":"{case}","scenario":"{scenario}","seed":11}}"#),
    );
    let out = tmp.path().join("simout");
    run_ok(bin().args(["simulate", "--config"]).arg(&config).arg("--out").arg(&out));

    for name in ["dispatch.csv", "lme.csv", "sci.csv", "accounts.csv"] {
        let text = read(&out, name);
        assert!(
            text.starts_with("# carbonflow-schema v1\n"),
            "{name} missing schema header"
        );
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "summary.json")).unwrap();
    assert_eq!(summary["schema"], "carbonflow-schema v1");
    assert_eq!(summary["hours"], 48);

    // Summary totals must equal the column sums of the per-hour file.
    let mut load = 0.0;
    let mut gen = 0.0;
    let mut line = 0.0;
    for row in read(&out, "accounts.csv").lines().skip(2) {
        let f: Vec<&str> = row.split(',').collect();
        let v: f64 = f[3].parse().unwrap();
        match f[1] {
            "load" => load += v,
            "gen" => gen += v,
            "line" => line += v,
            other => panic!("unexpected entity {other}"),
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(1.0);
    assert!(close(load, summary["load_account_kg"].as_f64().unwrap()));
    assert!(close(gen, summary["gen_account_kg"].as_f64().unwrap()));
    assert!(close(line, summary["line_account_kg"].as_f64().unwrap()));
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (case, scenario) = generated_inputs(tmp.path());
    let config = write_config(
        tmp.path(),
        "sim.json",
        &format!(r#"{{"case":"{case}","scenario":"{scenario}","seed":11,"hours":24}}"#),
    );
    let mut outputs = Vec::new();
    for workers in ["1", "3", "8"] {
        let out = tmp.path().join(format!("w{workers}"));
        run_ok(
            bin()
                .args(["simulate", "--config"])
                .arg(&config)
                .args(["--workers", workers, "--out"])
                .arg(&out),
        );
        outputs.push(
            ["summary.json", "lme.csv", "sci.csv", "dispatch.csv", "accounts.csv"]
                .map(|n| read(&out, n)),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn env_var_sets_the_default_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let (case, scenario) = generated_inputs(tmp.path());
    let config = write_config(
        tmp.path(),
        "sim.json",
        &format!(r#"{{"case":"{case}","scenario":"{scenario}","seed":11,"hours":6}}"#),
    );
    let out = tmp.path().join("env");
    run_ok(
        bin()
            .env("CARBONFLOW_WORKERS", "2")
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out),
    );
    let bad = bin()
        .env("CARBONFLOW_WORKERS", "lots")
        .args(["simulate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn cluster_exports_labels_linkage_and_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let (case, scenario) = generated_inputs(tmp.path());
    let config = write_config(
        tmp.path(),
        "clu.json",
        &format!(
            r#"{{"case":"{case}","scenario":"{scenario}","seed":11,"cluster":{{"k":3}}}}"#
        ),
    );
    let out = tmp.path().join("cluout");
    run_ok(bin().args(["cluster", "--config"]).arg(&config).arg("--out").arg(&out));
    let report: serde_json::Value = serde_json::from_str(&read(&out, "cluster.json")).unwrap();
    let labels = report["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 30);
    assert!(labels.iter().all(|l| l.as_u64().unwrap() < 3));
    // N leaves merge in N-1 steps.
    assert_eq!(report["linkage"].as_array().unwrap().len(), 29);
    assert!(read(&out, "aggregates.csv").contains("hour_of_day,"));
}

#[test]
fn shift_and_site_reports_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (case, scenario) = generated_inputs(tmp.path());
    let config = write_config(
        tmp.path(),
        "shift.json",
        &format!(
            r#"{{"case":"{case}","scenario":"{scenario}","seed":11,"hours":24,
                 "shift":{{"data_centers":[{{"name":"dc","bus":5,"base_load":30.0}}]}},
                 "site":{{"n_samples":0,"delta":1.0}}}}"#
        ),
    );
    let out = tmp.path().join("shiftout");
    run_ok(bin().args(["shift", "--config"]).arg(&config).arg("--out").arg(&out));
    let report: serde_json::Value = serde_json::from_str(&read(&out, "shift_report.json")).unwrap();
    assert!(report["expected_change_kg"].as_f64().unwrap() <= 0.0);
    assert_eq!(read(&out, "plan.csv").lines().count(), 2 + 24);

    // Zero-sample siting is a well-defined empty report with exit 0.
    let out2 = tmp.path().join("siteout");
    run_ok(bin().args(["site", "--config"]).arg(&config).arg("--out").arg(&out2));
    let site: serde_json::Value = serde_json::from_str(&read(&out2, "site_report.json")).unwrap();
    assert_eq!(site["expected_change_kg"], 0.0);
    assert_eq!(site["change_ratio_pct"], serde_json::Value::Null);
    assert_eq!(read(&out2, "site_samples.csv").lines().count(), 2);
}

#[test]
fn exit_codes_classify_config_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    // No config at all.
    let out = bin().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Config referencing a missing case file.
    let config = write_config(
        tmp.path(),
        "bad.json",
        r#"{"case":"nope.json","scenario":"nope.csv"}"#,
    );
    let out = bin().args(["simulate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    // Malformed config JSON.
    let config = write_config(tmp.path(), "bad2.json", "{nope");
    let out = bin().args(["simulate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_with_same_config_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (case, scenario) = generated_inputs(tmp.path());
    let config = write_config(
        tmp.path(),
        "sim.json",
        &format!(r#"{{"case":"{case}","scenario":"{scenario}","seed":11,"hours":12}}"#),
    );
    let out = tmp.path().join("rerun");
    run_ok(bin().args(["simulate", "--config"]).arg(&config).arg("--out").arg(&out));
    let first = read(&out, "summary.json");
    run_ok(bin().args(["simulate", "--config"]).arg(&config).arg("--out").arg(&out));
    assert_eq!(first, read(&out, "summary.json"));
}
