//! End-to-end runs of the `pdsub` binary: every subcommand must produce its
//! artifacts, the emitted qualitative checks must hold, and reruns must be
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdsub"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut names_b: Vec<String> = fs::read_dir(b)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names_b.sort();
    assert_eq!(names, names_b, "artifact sets differ");
    for n in names {
        let x = fs::read(a.join(&n)).unwrap();
        let y = fs::read(b.join(&n)).unwrap();
        assert_eq!(x, y, "artifact {n} differs between reruns");
    }
}

#[test]
fn toy_outputs_are_deterministic_and_match_expectations() {
    let d1 = tmp("toy1");
    let d2 = tmp("toy2");
    run_ok(bin().args(["toy", "--out"]).arg(&d1));
    run_ok(bin().args(["toy", "--out"]).arg(&d2));
    assert_same_tree(&d1, &d2);

    let s = read_json(&d1.join("toy_summary.json"));
    assert_eq!(s["growth_end_t0"], 397);
    assert_eq!(s["norm_at_100_in_(1e56,1e57)"], true);
    assert_eq!(s["objective_monotone_after_peak"], true);
    let csv = fs::read_to_string(d1.join("toy_trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,f,delta,norm_x,alpha,lambda\n"));
    assert_eq!(csv.lines().count(), 602, "600 steps + final state + header");
}

#[test]
fn fig1_small_stays_within_bounds() {
    let dir = tmp("fig1");
    run_ok(
        bin()
            .args(["fig1", "--small", "--t-max", "300", "--out"])
            .arg(&dir),
    );
    let s = read_json(&dir.join("fig1_summary.json"));
    assert_eq!(s["checks"]["all_aggregates_within_bounds"], true);
    assert_eq!(s["checks"]["optimized_has_best_bound_from_t3"], true);
    assert_eq!(s["schedules"].as_array().unwrap().len(), 6);
    let csv = fs::read_to_string(dir.join("fig1_curves.csv")).unwrap();
    assert!(csv.starts_with("schedule,t,aggregate,primal_gap,dual_gap,dist2,bound_rhs\n"));
}

#[test]
fn table1_small_hits_composite_criteria_promptly() {
    let dir = tmp("table1");
    run_ok(
        bin()
            .args([
                "table1",
                "--small",
                "--t-max",
                "50000",
                "--eps",
                "0.5",
                "--schedule",
                "linear,optimized",
                "--out",
            ])
            .arg(&dir),
    );
    let s = read_json(&dir.join("table1.json"));
    for check in s["checks"].as_array().unwrap() {
        assert_eq!(check["delta_d_within_2"], true, "{check}");
        assert_eq!(check["p_d_within_2"], true, "{check}");
    }
    let csv = fs::read_to_string(dir.join("table1.csv")).unwrap();
    assert!(csv.starts_with("criterion,linear,optimized\n"));
    assert_eq!(csv.lines().count(), 8, "header + seven criteria");
}

#[test]
fn table2_small_caps_the_growth_phase() {
    let dir = tmp("table2");
    run_ok(
        bin()
            .args([
                "table2",
                "--small",
                "--t-max",
                "300",
                "--sigma",
                "0,0.05",
                "--out",
            ])
            .arg(&dir),
    );
    let s = read_json(&dir.join("table2.json"));
    assert_eq!(s["checks"]["t0_monotone_in_sigma"], true);
    assert_eq!(s["checks"]["log10_c0_monotone_in_sigma"], true);
    for row in s["rows"].as_array().unwrap() {
        // The capped variant keeps only the free first step in its growth
        // phase and never shows a divergence spike.
        assert_eq!(row["capped"]["growth_end_t0"], 0, "{row}");
        assert_eq!(row["capped"]["no_divergence_spike"], true, "{row}");
    }
}

#[test]
fn equivalence_matches_primal_and_dual_forms() {
    let dir = tmp("equiv");
    run_ok(bin().args(["equivalence", "--t-max", "120", "--out"]).arg(&dir));
    let s = read_json(&dir.join("equivalence.json"));
    assert_eq!(s["all_below_1e-9"], true);
    assert_eq!(s["rows"].as_array().unwrap().len(), 60);
}

#[test]
fn run_reproduces_from_a_dumped_instance() {
    let d1 = tmp("run1");
    let d2 = tmp("run2");
    let dump = d1.join("inst.json");
    run_ok(
        bin()
            .args([
                "run",
                "--small",
                "--t-max",
                "200",
                "--schedule",
                "linear",
                "--dump-instance",
            ])
            .arg(&dump)
            .arg("--out")
            .arg(&d1),
    );
    run_ok(
        bin()
            .args(["run", "--small", "--t-max", "200", "--schedule", "linear"])
            .arg("--load-instance")
            .arg(&dump)
            .arg("--out")
            .arg(&d2),
    );
    let a = fs::read(d1.join("custom_linear.csv")).unwrap();
    let b = fs::read(d2.join("custom_linear.csv")).unwrap();
    assert_eq!(a, b, "a run from the dumped instance must match the original");
    let summary = read_json(&d1.join("custom_summary.json"));
    let report = &summary["schedules"][0]["report"];
    assert!(report["rate_bound"].as_f64().unwrap().is_finite());
    assert_eq!(report["gaps_defined"], true);
}
