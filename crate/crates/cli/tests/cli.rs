//! End-to-end command-line tests: exit codes, artifact shapes, and the
//! byte-identical rerun guarantee.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavetune"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        files.insert(
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path()).unwrap(),
        );
    }
    files
}

fn csv_data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2) // provenance comment + header
        .map(str::to_string)
        .collect()
}

fn json_value(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn power_scaling_defaults_and_rerun_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out = run(&["power-scaling", "--out", out_a.to_str().unwrap()]);
    assert_exit(&out, 0);
    let rows = csv_data_rows(&out_a.join("power_scaling.csv"));
    assert_eq!(rows.len(), 366);
    let summary = json_value(&out_a.join("power_summary.json"));
    assert_eq!(summary["crossover_channels"], 8);
    assert!(summary["config_hash"].is_string());
    assert_eq!(summary["seed"], 42);
    // monotonicity of the two power columns
    let mut prev_pc = 0.0;
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        let module: f64 = cols[1].parse().unwrap();
        let pc: f64 = cols[2].parse().unwrap();
        assert!(module >= 6.0 - 1e-9);
        assert!(pc > prev_pc);
        prev_pc = pc;
    }
    let out_b = tmp.path().join("b");
    let out = run(&["power-scaling", "--out", out_b.to_str().unwrap()]);
    assert_exit(&out, 0);
    assert_eq!(read_dir_bytes(&out_a), read_dir_bytes(&out_b));
}

#[test]
fn optimize_laser_row_counts_and_summary_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "two.json",
        r#"{ "laser_opt": { "channels": [0, 121] } }"#,
    );
    let out_dir = tmp.path().join("laser");
    let out = run(&[
        "optimize-laser",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let rows = csv_data_rows(&out_dir.join("laser_events.csv"));
    assert_eq!(rows.len(), 2, "2 channels give 2 ordered events");
    let max_time: f64 = rows
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    let summary = json_value(&out_dir.join("laser_summary.json"));
    let worst = summary["worst_time_to_within_ns"].as_f64().unwrap();
    assert!(
        (worst - max_time).abs() < 1e-6,
        "summary worst {worst} != csv max {max_time}"
    );
    assert_eq!(summary["n_events"], 2);
    // pre-emphasis artifact covers both events
    let table = json_value(&out_dir.join("preemph_table.json"));
    assert_eq!(table["events"].as_array().unwrap().len(), 2);
}

#[test]
fn optimize_soa_artifacts_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "tiny.json",
        r#"{ "pso": { "n_particles": 8, "max_iterations": 2 } }"#,
    );
    let out_dir = tmp.path().join("soa");
    let out = run(&[
        "optimize-soa",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    for name in ["soa_drive.json", "soa_drive.csv", "soa_convergence.csv", "soa_metrics.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let metrics = json_value(&out_dir.join("soa_metrics.json"));
    assert!(metrics["baseline"]["settle_pm5pct_s"].as_f64().is_some());
    assert!(metrics["optimized"]["settle_pm5pct_s"].as_f64().is_some());
    assert_eq!(
        csv_data_rows(&out_dir.join("soa_convergence.csv")).len(),
        3,
        "initial evaluation plus two iterations"
    );
    // summary printed to stdout
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("baseline:") && stdout.contains("optimized:"));
}

#[test]
fn simulate_system_requires_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate-system",
        "--out",
        tmp.path().join("sys").to_str().unwrap(),
    ]);
    assert_exit(&out, 3);
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    // malformed json
    let bad = write_config(tmp.path(), "bad.json", "{ not json");
    let out = run(&["power-scaling", "--config", bad.to_str().unwrap()]);
    assert_exit(&out, 2);
    // unknown field rejected
    let unknown = write_config(tmp.path(), "unknown.json", r#"{ "bogus_field": 1 }"#);
    let out = run(&["power-scaling", "--config", unknown.to_str().unwrap()]);
    assert_exit(&out, 2);
    // missing device file named in the message
    let missing = write_config(
        tmp.path(),
        "missing.json",
        r#"{ "devices_path": "no_such_devices.json" }"#,
    );
    let out = run(&["power-scaling", "--config", missing.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("no_such_devices.json"),
        "error message must name the missing path"
    );
}

/// Full artifact flow: optimize both devices, then simulate and validate.
/// Also covers the gates-off view and the impossible-tolerance failure.
#[test]
fn simulate_system_full_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let art = tmp.path().join("artifacts");
    let drive = art.join("soa_drive.json");
    let table = art.join("preemph_table.json");
    let cfg_body = format!(
        r#"{{
  "pso": {{ "n_particles": 60, "max_iterations": 80 }},
  "system": {{
    "soa_drive_path": {:?},
    "preemph_table_path": {:?}
  }}
}}"#,
        drive.to_str().unwrap(),
        table.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), "flow.json", &cfg_body);
    let cfg_arg = cfg.to_str().unwrap();
    assert_exit(
        &run(&["optimize-soa", "--config", cfg_arg, "--out", art.to_str().unwrap()]),
        0,
    );
    assert_exit(
        &run(&["optimize-laser", "--config", cfg_arg, "--out", art.to_str().unwrap()]),
        0,
    );

    let sys_a = tmp.path().join("sys_a");
    let out = run(&["simulate-system", "--config", cfg_arg, "--out", sys_a.to_str().unwrap()]);
    assert_exit(&out, 0);
    let report = json_value(&sys_a.join("system_validation.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["slots"].as_array().unwrap().len(), 4);
    assert_eq!(csv_data_rows(&sys_a.join("system_slots.csv")).len(), 4);

    // identical rerun produces byte-identical outputs
    let sys_b = tmp.path().join("sys_b");
    assert_exit(
        &run(&["simulate-system", "--config", cfg_arg, "--out", sys_b.to_str().unwrap()]),
        0,
    );
    assert_eq!(read_dir_bytes(&sys_a), read_dir_bytes(&sys_b));

    // gates off: retune excursions become visible in the frequency CSV
    let sys_off = tmp.path().join("sys_off");
    let out = run(&[
        "simulate-system",
        "--config",
        cfg_arg,
        "--out",
        sys_off.to_str().unwrap(),
        "--gates-off",
    ]);
    assert_exit(&out, 0);
    let max_offset = csv_data_rows(&sys_off.join("system_freq.csv"))
        .iter()
        .map(|r| {
            r.split(',')
                .nth(1)
                .unwrap()
                .parse::<f64>()
                .unwrap()
                .abs()
        })
        .fold(0.0f64, f64::max);
    assert!(
        max_offset > 100.0,
        "gates-off trace shows no excursions (max {max_offset} GHz)"
    );

    // an impossible tolerance fails validation with exit 4
    let strict_body = cfg_body.replace(
        "\"system\": {",
        "\"system\": {\n    \"tol_ghz\": 0.001,",
    );
    let strict = write_config(tmp.path(), "strict.json", &strict_body);
    let out = run(&[
        "simulate-system",
        "--config",
        strict.to_str().unwrap(),
        "--out",
        tmp.path().join("sys_strict").to_str().unwrap(),
    ]);
    assert_exit(&out, 4);
}

/// Acceptance: any command rerun with identical config and seed produces
/// byte-identical output files.
#[test]
fn acceptance_8_deterministic_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "det.json",
        r#"{
  "pso": { "n_particles": 10, "max_iterations": 3 },
  "laser_opt": { "channels": [0, 60, 121] }
}"#,
    );
    let cfg_arg = cfg.to_str().unwrap();
    let commands: [&[&str]; 3] = [
        &["power-scaling"],
        &["optimize-soa", "--seed", "7"],
        &["optimize-laser"],
    ];
    for (i, command) in commands.iter().enumerate() {
        let out_a = tmp.path().join(format!("{i}_a"));
        let out_b = tmp.path().join(format!("{i}_b"));
        for dir in [&out_a, &out_b] {
            let mut args: Vec<&str> = command.to_vec();
            args.extend(["--config", cfg_arg, "--out", dir.to_str().unwrap()]);
            assert_exit(&run(&args), 0);
        }
        let a = read_dir_bytes(&out_a);
        let b = read_dir_bytes(&out_b);
        assert!(!a.is_empty());
        assert_eq!(a, b, "command {command:?} is not byte-deterministic");
    }
    println!("ACCEPTANCE 8 (determinism): PASS - reruns of power-scaling, optimize-soa and optimize-laser are byte-identical");
}
