//! End-to-end tests of the `gridflux` binary: exit codes, artifacts, strict
//! config handling, overrides, and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridflux"))
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn step_config(controller: &str, tf: f64) -> String {
    format!(
        r#"{{
  "scenario": {{
    "name": "rlc_cpl_step",
    "params": {{"r1": 0.1, "l1": 0.01, "c1": 0.04, "u1_max": 2.0}},
    "base_load": 0.5,
    "disturbance": {{"kind": "step", "magnitude": 0.5, "start": 1.0}},
    "controller": {{"kind": "{controller}"}}
  }},
  "sim": {{"dt": 1e-5, "tf": {tf}, "output_every": 1000}},
  "seed": 42
}}"#
    )
}

fn run_ok(output: &Output) -> i32 {
    output.status.code().expect("process terminated by signal")
}

#[test]
fn simulate_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(&cfg, &step_config("energy_two_ts", 3.0));
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["trajectory.csv", "summary.json", "resolved_config.json"] {
        assert!(
            dir.path().join("run").join(artifact).exists(),
            "missing {artifact}"
        );
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["collapsed"], serde_json::json!(false));
}

#[test]
fn simulate_reports_collapse_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(&cfg, &step_config("pi_two_loop", 3.0));
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["collapsed"], serde_json::json!(true));
    // Artifacts are still written on collapse.
    assert!(dir.path().join("run/trajectory.csv").exists());
}

#[test]
fn config_errors_name_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(
        &cfg,
        &step_config("energy_two_ts", 3.0).replace("\"l1\": 0.01", "\"l1\": -0.01"),
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("l1"), "diagnostic must name the key: {stderr}");

    let cfg2 = dir.path().join("config2.json");
    write(
        &cfg2,
        &step_config("energy_two_ts", 3.0).replace("\"seed\": 42", "\"seed\": 42, \"mystery\": 1"),
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg2)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("mystery"),
        "unknown keys must be rejected by name: {stderr}"
    );
}

#[test]
fn resolved_config_reproduces_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(&cfg, &step_config("pd", 2.0));
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");

    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run1)
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0);

    let out = bin()
        .args(["simulate", "--config"])
        .arg(run1.join("resolved_config.json"))
        .arg("--out")
        .arg(&run2)
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    for artifact in ["trajectory.csv", "summary.json"] {
        let a = std::fs::read(run1.join(artifact)).unwrap();
        let b = std::fs::read(run2.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between original and resolved run");
    }
}

#[test]
fn set_overrides_apply_before_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(&cfg, &step_config("energy_two_ts", 2.0));
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(["--set", "scenario.params.l1=0.02", "--set", "sim.output_every=2000"])
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["scenario"]["params"]["l1"], serde_json::json!(0.02));
    assert_eq!(resolved["sim"]["output_every"], serde_json::json!(2000));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(&cfg, &step_config("pd", 2.0));
    let env_out = dir.path().join("env_out");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("GRIDFLUX_OUT", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0);
    assert!(env_out.join("trajectory.csv").exists());
}

fn stability_config(coupling: f64, unstable: bool) -> String {
    let a2 = if unstable {
        "[[0.1, 0.0], [0.0, -1.0]]"
    } else {
        "[[-1.0, 0.0], [0.0, -1.0]]"
    };
    format!(
        r#"{{
  "stability": {{
    "subsystems": [
      {{"id": "s1", "a": [[-1.0, 0.0], [0.0, -1.0]], "g": [[2.0, 0.0], [0.0, 2.0]]}},
      {{"id": "s2", "a": {a2}, "g": [[2.0, 0.0], [0.0, 2.0]]}}
    ],
    "couplings": [
      {{"i": 0, "j": 1, "block": [[{coupling}, 0.0], [0.0, {coupling}]]}},
      {{"i": 1, "j": 0, "block": [[{coupling}, 0.0], [0.0, {coupling}]]}}
    ]
  }}
}}"#
    )
}

#[test]
fn stability_exit_codes_follow_verdicts() {
    let dir = tempfile::tempdir().unwrap();

    for (name, cfg_text, expected) in [
        ("stable", stability_config(0.1, false), 0),
        ("indeterminate", stability_config(2.0, false), 3),
        ("unstable", stability_config(0.1, true), 4),
    ] {
        let cfg = dir.path().join(format!("{name}.json"));
        write(&cfg, &cfg_text);
        let out_dir = dir.path().join(name);
        let out = bin()
            .args(["stability", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .arg("--oracle")
            .output()
            .unwrap();
        assert_eq!(
            run_ok(&out),
            expected,
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
                .unwrap();
        assert!(report["verdict"].is_string());
        if expected == 0 {
            let max_re = report["oracle_max_re"].as_f64().unwrap();
            assert!(max_re < 0.0, "stable verdict must be backed by the oracle");
        }
    }
}

#[test]
fn stability_sweep_reports_monotone_transition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    write(
        &cfg,
        r#"{"stability": {"two_area_sweep": {"tie_values": [0.001, 0.004, 0.016, 0.2, 5.0]}}}"#,
    );
    let out = bin()
        .args(["stability", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("sweep"))
        .output()
        .unwrap();
    // The last point is indeterminate.
    assert_eq!(run_ok(&out), 3);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sweep/report.json")).unwrap(),
    )
    .unwrap();
    let verdicts: Vec<String> = report["sweep"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["verdict"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(verdicts.first().map(String::as_str), Some("stable"));
    assert_eq!(verdicts.last().map(String::as_str), Some("indeterminate"));
    let first_bad = verdicts.iter().position(|v| v != "stable").unwrap();
    assert!(
        verdicts[first_bad..].iter().all(|v| v == "indeterminate"),
        "verdict transition must be monotone: {verdicts:?}"
    );
}

#[test]
fn compare_writes_one_row_per_controller() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    let mut text = step_config("none", 2.0);
    text = text.replace(
        "\"seed\": 42",
        r#""seed": 42,
  "controllers": [
    {"kind": "pi_two_loop"},
    {"kind": "pd"},
    {"kind": "energy_single"},
    {"kind": "energy_two_ts"}
  ]"#,
    );
    write(&cfg, &text);
    let out = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("cmp"))
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cmp/comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "header + four rows: {csv}");
    assert!(lines[0].starts_with("controller,collapsed"));
    for kind in ["pi_two_loop", "pd", "energy_single", "energy_two_ts"] {
        assert!(csv.contains(kind));
        assert!(
            dir.path().join(format!("cmp/{kind}_summary.json")).exists(),
            "per-controller summary for {kind}"
        );
    }
}

#[test]
fn compare_rejects_empty_controller_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    write(&cfg, &step_config("none", 2.0));
    let out = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("cmp"))
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 1);
}
