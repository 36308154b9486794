//! Batch command-line front end: config dispatch, artifact writing, and
//! exit-code policy.
//!
//! Subcommands (see the `gridflux` binary):
//! - `simulate`: run one scenario; writes `trajectory.csv`, `summary.json`,
//!   `resolved_config.json`. Exit 0 on success, 2 when collapse was
//!   detected (artifacts still written), 1 on config errors.
//! - `stability`: assess subsystems from the config (or run the two-area
//!   tie sweep); writes `report.json`. Exit 0 stable, 3 indeterminate,
//!   4 subsystem-unstable, 1 on config errors.
//! - `compare`: run the same scenario under each controller in the config's
//!   list; writes `comparison.csv` plus per-controller artifacts.
//! - `accept`: run the acceptance suite, one pass/fail line per criterion.
//!
//! All files are written atomically (temp file + rename). Numbers are
//! serialized with 17 significant digits so doubles round-trip exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{self, Config, OutputFormat};
use crate::sim::{self, RlcControllerSpec, RunSummary, Scenario, ScenarioKind, Trajectory};
use crate::stability::{assess, oracle_full_spectrum, StabilityReport, Verdict};
use crate::{Error, Result};

/// Environment variable providing the default output directory.
pub const OUT_ENV: &str = "GRIDFLUX_OUT";

/// Resolve the output directory: flag > config > environment > `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &Config) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = &cfg.output.dir {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var(OUT_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("out")
}

/// 17 significant digits: round-trip exact for f64.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Render a trajectory as CSV with the documented column order
/// (`time` first, then the scenario's columns).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str("time");
    for c in &traj.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (t, row) in traj.times.iter().zip(&traj.rows) {
        out.push_str(&format_f64(*t));
        for v in row {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Write a file atomically: temp in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = path.to_path_buf();
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    tmp.set_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_run_artifacts(
    out_dir: &Path,
    prefix: &str,
    traj: &Trajectory,
    summary: &RunSummary,
    formats: &[OutputFormat],
) -> Result<()> {
    if formats.contains(&OutputFormat::Csv) {
        write_atomic(
            &out_dir.join(format!("{prefix}trajectory.csv")),
            &trajectory_csv(traj),
        )?;
    }
    if formats.contains(&OutputFormat::Json) {
        let mut doc = serde_json::to_value(summary)?;
        doc["events"] = serde_json::to_value(&traj.events)?;
        write_atomic(
            &out_dir.join(format!("{prefix}summary.json")),
            &format!("{}\n", serde_json::to_string_pretty(&doc)?),
        )?;
    }
    Ok(())
}

fn scenario_from_config(cfg: &Config) -> Result<Scenario> {
    let kind = cfg
        .scenario
        .clone()
        .ok_or_else(|| Error::Config("config has no 'scenario' section".into()))?;
    let sim_settings = cfg
        .sim
        .clone()
        .ok_or_else(|| Error::Config("config has no 'sim' section".into()))?;
    Ok(Scenario {
        scenario: kind,
        sim: sim_settings,
        seed: cfg.seed,
    })
}

/// Apply the `--seed` flag: sets the run seed and, for fluctuation
/// disturbances, the signal seed.
pub fn apply_seed(scenario: &mut Scenario, seed: u64) {
    scenario.seed = seed;
    let dist = match &mut scenario.scenario {
        ScenarioKind::RlcCplStep(s) | ScenarioKind::RlcCplFluct(s) => &mut s.disturbance,
        ScenarioKind::TwoAreaFreq(s) => &mut s.disturbance,
    };
    if let crate::components::DisturbanceSignal::Fluctuation { seed: s, .. } = dist {
        *s = seed;
    }
}

/// `simulate` subcommand body. Returns the process exit code.
pub fn cmd_simulate(
    config_path: &Path,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
    overrides: &[String],
) -> Result<i32> {
    let (cfg, resolved) = config::load(config_path, overrides)?;
    let out_dir = resolve_out_dir(out_flag, &cfg);
    let mut scenario = scenario_from_config(&cfg)?;
    if let Some(seed) = seed_flag {
        apply_seed(&mut scenario, seed);
    }

    let (traj, summary) = sim::run(&scenario)?;
    write_run_artifacts(&out_dir, "", &traj, &summary, &cfg.output.formats)?;
    write_resolved(&out_dir, &resolved, seed_flag, &scenario)?;

    println!(
        "{}: collapsed={} settled={} (artifacts in {})",
        scenario.name(),
        summary.collapsed,
        summary.settled,
        out_dir.display()
    );
    Ok(if summary.collapsed { 2 } else { 0 })
}

fn write_resolved(
    out_dir: &Path,
    resolved: &serde_json::Value,
    seed_flag: Option<u64>,
    scenario: &Scenario,
) -> Result<()> {
    // Fold flag-level overrides back into the resolved document so that
    // re-running from it reproduces the exact same run.
    let mut doc = resolved.clone();
    if seed_flag.is_some() {
        doc["seed"] = serde_json::to_value(scenario.seed)?;
        doc["scenario"] = serde_json::to_value(&scenario.scenario)?;
    }
    write_atomic(
        &out_dir.join("resolved_config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&doc)?),
    )
}

fn verdict_exit_code(verdict: &Verdict) -> i32 {
    match verdict {
        Verdict::Stable => 0,
        Verdict::Indeterminate => 3,
        Verdict::SubsystemUnstable => 4,
    }
}

fn report_to_json(report: &StabilityReport, oracle: bool) -> serde_json::Value {
    let w_rows: Vec<Vec<f64>> = (0..report.w.nrows())
        .map(|r| (0..report.w.ncols()).map(|c| report.w[(r, c)]).collect())
        .collect();
    let mut doc = serde_json::json!({
        "verdict": report.verdict,
        "w": w_rows,
        "strictly_row_dominant": report.strictly_row_dominant,
        "subsystems": report.subsystems,
    });
    if oracle {
        if let Some(spec) = &report.oracle_spectrum {
            let eigs: Vec<serde_json::Value> = spec
                .iter()
                .map(|c| serde_json::json!({"re": c.re, "im": c.im}))
                .collect();
            doc["oracle_spectrum"] = serde_json::Value::Array(eigs);
            let max_re = spec.iter().fold(f64::NEG_INFINITY, |a, c| a.max(c.re));
            doc["oracle_max_re"] = serde_json::json!(max_re);
        }
    }
    doc
}

/// `stability` subcommand body.
pub fn cmd_stability(
    config_path: &Path,
    out_flag: Option<&Path>,
    oracle: bool,
    overrides: &[String],
) -> Result<i32> {
    let (cfg, resolved) = config::load(config_path, overrides)?;
    let out_dir = resolve_out_dir(out_flag, &cfg);
    let stability_cfg = cfg
        .stability
        .clone()
        .ok_or_else(|| Error::Config("config has no 'stability' section".into()))?;

    let mut doc = serde_json::json!({});
    let exit_code;

    if let Some(sweep) = &stability_cfg.two_area_sweep {
        if sweep.tie_values.is_empty() {
            return Err(Error::Config("two_area_sweep.tie_values is empty".into()));
        }
        let mut points = Vec::new();
        let mut last_verdict = Verdict::Stable;
        for &b in &sweep.tie_values {
            let scenario = sim::default_two_area(
                b,
                crate::components::DisturbanceSignal::None,
                None,
            );
            let (subs, coups) = sim::two_area_stability_blocks(&scenario)?;
            let mut report = assess(&subs, &coups)?;
            if oracle {
                report.oracle_spectrum = Some(oracle_full_spectrum(&subs, &coups)?);
            }
            last_verdict = report.verdict.clone();
            let mut point = report_to_json(&report, oracle);
            point["tie_susceptance"] = serde_json::json!(b);
            points.push(point);
        }
        doc["sweep"] = serde_json::Value::Array(points);
        exit_code = verdict_exit_code(&last_verdict);
    } else {
        let (subs, coups) = stability_cfg.to_specs()?;
        if subs.is_empty() {
            return Err(Error::Config("stability config lists no subsystems".into()));
        }
        let mut report = assess(&subs, &coups)?;
        if oracle && report.verdict != Verdict::SubsystemUnstable {
            report.oracle_spectrum = Some(oracle_full_spectrum(&subs, &coups)?);
        }
        exit_code = verdict_exit_code(&report.verdict);
        doc = report_to_json(&report, oracle);
    }

    write_atomic(
        &out_dir.join("report.json"),
        &format!("{}\n", serde_json::to_string_pretty(&doc)?),
    )?;
    write_atomic(
        &out_dir.join("resolved_config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&resolved)?),
    )?;
    println!("stability report written to {}", out_dir.display());
    Ok(exit_code)
}

/// `compare` subcommand body: the same scenario under each controller.
pub fn cmd_compare(
    config_path: &Path,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
    overrides: &[String],
) -> Result<i32> {
    let (cfg, resolved) = config::load(config_path, overrides)?;
    let out_dir = resolve_out_dir(out_flag, &cfg);
    if cfg.controllers.is_empty() {
        return Err(Error::Config(
            "compare needs a non-empty 'controllers' list".into(),
        ));
    }
    let base = scenario_from_config(&cfg)?;

    let mut csv = String::from(
        "controller,collapsed,collapse_time,settled,settling_time,port_residual_p,port_residual_q_dot,regulated_std_post,conservation_ratio\n",
    );
    for spec in &cfg.controllers {
        let mut scenario = base.clone();
        match &mut scenario.scenario {
            ScenarioKind::RlcCplStep(s) | ScenarioKind::RlcCplFluct(s) => {
                s.controller = spec.clone();
            }
            ScenarioKind::TwoAreaFreq(_) => {
                return Err(Error::Config(
                    "compare operates on the RLC scenarios".into(),
                ));
            }
        }
        if let Some(seed) = seed_flag {
            apply_seed(&mut scenario, seed);
        }
        let (traj, summary) = sim::run(&scenario)?;
        write_run_artifacts(
            &out_dir,
            &format!("{}_", spec.kind_name()),
            &traj,
            &summary,
            &cfg.output.formats,
        )?;
        let opt = |v: Option<f64>| v.map_or(String::new(), format_f64);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            spec.kind_name(),
            summary.collapsed,
            opt(summary.collapse_time),
            summary.settled,
            opt(summary.settling_time),
            opt(summary.port_residual_p),
            opt(summary.port_residual_q_dot),
            opt(summary.regulated_std_post),
            format_f64(summary.conservation_ratio),
        );
        println!(
            "{:>14}: collapsed={} settled={}",
            spec.kind_name(),
            summary.collapsed,
            summary.settled
        );
    }
    write_atomic(&out_dir.join("comparison.csv"), &csv)?;
    write_atomic(
        &out_dir.join("resolved_config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&resolved)?),
    )?;
    Ok(0)
}

/// `accept` subcommand body: run every acceptance criterion and print one
/// line per criterion.
pub fn cmd_accept(out_flag: Option<&Path>) -> Result<i32> {
    let outcomes = crate::accept::run_all();
    let mut all_passed = true;
    let mut lines = String::new();
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        let line = format!("[{status}] criterion {:2}: {} — {}", o.id, o.name, o.detail);
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
        all_passed &= o.passed;
    }
    if let Some(dir) = out_flag {
        write_atomic(&dir.join("acceptance.txt"), &lines)?;
    }
    Ok(if all_passed { 0 } else { 1 })
}

/// Default controller comparison list (the four-controller study).
pub fn default_controller_list() -> Vec<RlcControllerSpec> {
    vec![
        RlcControllerSpec::PiTwoLoop(Default::default()),
        RlcControllerSpec::Pd(Default::default()),
        RlcControllerSpec::EnergySingle(Default::default()),
        RlcControllerSpec::EnergyTwoTs(Default::default()),
    ]
}
