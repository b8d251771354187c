//! End-to-end runs of the rte binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rte"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rte-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const FORWARD_CONFIG: &str = r#"
[mesh]
extents = [1.0, 1.0]
cells = [12, 12]

[velocity]
v_min = 1.0
v_max = 1.0
n_angles = 8

[coefficients]
sigma_a = { preset = "constant", value = 0.2 }
sigma_s = { preset = "constant", value = 0.1 }

[run]
horizon = 0.4

[initial]
preset = "gaussian"
amplitude = 1.0
center = [0.5, 0.5]
width = 0.15
floor = 0.1
"#;

#[test]
fn forward_run_produces_artifacts() {
    let dir = temp_dir("forward");
    let config = dir.join("run.toml");
    std::fs::write(&config, FORWARD_CONFIG).unwrap();
    let out = dir.join("out");
    let status = bin()
        .args(["forward", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "manifest.json",
        "partition.csv",
        "gamma_plus.csv",
        "gamma_minus.csv",
        "energy.csv",
        "energy_report.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"complete\""));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_is_named() {
    let dir = temp_dir("unknown-key");
    let config = dir.join("bad.toml");
    std::fs::write(&config, format!("{FORWARD_CONFIG}\nsigma_x = 1.0\n")).unwrap();
    let output = bin()
        .args(["forward", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("sigma_x"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_weight_slope_is_rejected() {
    let dir = temp_dir("bad-beta");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "{FORWARD_CONFIG}\n[carleman]\nbeta = 1.5\n\n[source]\nf = {{ preset = \"constant\", value = 1.0 }}\n"
        ),
    )
    .unwrap();
    let output = bin()
        .args(["carleman-check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("beta"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn carleman_check_runs_end_to_end() {
    let dir = temp_dir("carleman");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        r#"
[mesh]
extents = [1.0, 1.0]
cells = [12, 12]

[velocity]
v_min = 1.0
v_max = 1.0
n_angles = 8

[coefficients]
sigma_a = { preset = "constant", value = 0.2 }
sigma_s = { preset = "constant", value = 0.1 }

[run]
horizon = 8.5

[source]
f = { preset = "gaussian", amplitude = 1.0, center = [0.5, 0.5], width = 0.12 }

[carleman]
beta = 0.5
"#,
    )
    .unwrap();
    let out = dir.join("out");
    let status = bin()
        .args(["carleman-check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out.join("carleman_report.json")).unwrap();
    assert!(report.contains("weighted-scattering"));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("carleman_constants"));
    assert!(manifest.contains("\"r0\""));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn stability_ensemble_and_sweep_run_end_to_end() {
    let dir = temp_dir("ensemble");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        r#"
[mesh]
extents = [1.0, 1.0]
cells = [10, 10]

[velocity]
v_min = 1.0
v_max = 1.0
n_angles = 8

[coefficients]
sigma_a = { preset = "constant", value = 0.2 }
sigma_s = { preset = "constant", value = 0.1 }

[run]
horizon = 6.3

[carleman]
beta = 0.5

[ensemble]
target = "linearized-source"
count = 6
amplitude = 1.0
seed = 3

[sweep]
amp_min = 0.01
amp_max = 10.0
count = 5
seed = 3
"#,
    )
    .unwrap();
    let out = dir.join("out-ensemble");
    let status = bin()
        .args(["stability-ensemble", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3", "--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("ensemble.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7); // header + 6 experiments
    assert!(out.join("ensemble_report.json").exists());

    let out_sweep = dir.join("out-sweep");
    let status = bin()
        .args(["holder-sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_sweep)
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(out_sweep.join("holder_report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    let theta = parsed["fit"]["theta"].as_f64().unwrap();
    // The linearized map is exactly homogeneous, so the sweep recovers a
    // unit exponent.
    assert!((theta - 1.0).abs() < 0.05, "theta = {theta}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn forward_absorption_trace_decays_exactly_end_to_end() {
    // Two full CLI runs: pure absorption against free streaming. The
    // recorded outflow traces must differ by the exact decay factor.
    let dir = temp_dir("absorption-decay");
    let base = r#"
inflow = "zero"

[mesh]
extents = [1.0, 1.0]
cells = [16, 16]

[velocity]
v_min = 1.0
v_max = 1.0
n_angles = 8

[run]
horizon = 0.5

[initial]
preset = "gaussian"
amplitude = 1.0
center = [0.5, 0.5]
width = 0.15
"#;
    let absorbing =
        format!("{base}\n[coefficients]\nsigma_a = {{ preset = \"constant\", value = 0.5 }}\n");

    let run_one = |tag: &str, config_text: &str| -> Vec<(f64, f64)> {
        let config = dir.join(format!("{tag}.toml"));
        std::fs::write(&config, config_text).unwrap();
        let out = dir.join(tag);
        let status = bin()
            .args(["forward", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let csv = std::fs::read_to_string(out.join("gamma_plus.csv")).unwrap();
        csv.lines()
            .skip(1)
            .map(|line| {
                let cols: Vec<&str> = line.split(',').collect();
                (cols[2].parse().unwrap(), cols[3].parse().unwrap())
            })
            .collect()
    };

    let with_abs = run_one("absorbing", &absorbing);
    let free = run_one("free", base);
    assert_eq!(with_abs.len(), free.len());
    let mut worst: f64 = 0.0;
    for ((ta, ua), (tf, uf)) in with_abs.iter().zip(free.iter()) {
        assert_eq!(ta, tf);
        let expected = uf * (-0.5 * tf).exp();
        worst = worst.max((ua - expected).abs() / expected.abs().max(1e-290));
    }
    assert!(worst <= 1e-10, "trace decay deviation {worst:.3e}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_flag_exits_with_usage_error() {
    let output = bin().arg("forward").output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--config"));
}
