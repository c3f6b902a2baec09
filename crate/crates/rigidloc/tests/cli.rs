//! End-to-end checks of the `rigidloc` binary: config parsing, the run/
//! validate subcommands, output schemas, and the seed override.

use std::path::Path;
use std::process::Command;

fn rigidloc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rigidloc"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_RUN: &str = r#"
reference_range_db_sweep = [60.0, 100.0]
n_exp = 5
master_seed = 4242
methods = ["LS", "CLS", "CTLS"]
"#;

#[test]
fn run_writes_all_artifacts_with_expected_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_RUN);
    let out = tmp.path().join("results");

    let status = rigidloc()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--dump-measurements")
        .status()
        .unwrap();
    assert!(status.success());

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "ref_range_db,method,perturbation_std_m,n_exp,mean_angular_error_deg,rmse_translation_m"
    );
    assert_eq!(lines.count(), 2 * 3, "|sweep| x |methods| data rows");

    let trials = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    let trial_lines: Vec<&str> = trials.lines().collect();
    assert_eq!(trial_lines.len(), 1 + 2 * 3 * 5);
    for line in &trial_lines {
        assert_eq!(line.split(',').count(), 18);
    }

    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("master_seed=4242"));
    assert!(manifest.contains("euler_convention=extrinsic-xyz"));
    assert!(manifest.contains("anchor_mode=redrawn-per-trial"));

    let measurements = std::fs::read_to_string(out.join("measurements.csv")).unwrap();
    assert_eq!(
        measurements.lines().next().unwrap(),
        "ref_range_db,trial,anchor,sensor,range_m,true_range_m"
    );
    // 2 sweep points x 5 trials x 10 anchors x 6 sensors
    assert_eq!(measurements.lines().count(), 1 + 2 * 5 * 10 * 6);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_RUN);

    let run = |out: &Path, seed: Option<&str>| {
        let mut cmd = rigidloc();
        cmd.args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out);
        if let Some(seed) = seed {
            cmd.args(["--seed", seed]);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read_to_string(out.join("trials.csv")).unwrap()
    };

    let base = run(&tmp.path().join("a"), None);
    let reseeded = run(&tmp.path().join("b"), Some("7"));
    let reseeded_again = run(&tmp.path().join("c"), Some("7"));
    assert_ne!(base, reseeded);
    assert_eq!(reseeded, reseeded_again);
}

#[test]
fn validate_accepts_reference_and_rejects_degenerate_configs() {
    let tmp = tempfile::tempdir().unwrap();

    let good = write_config(tmp.path(), "n_exp = 10\n");
    let output = rigidloc()
        .args(["validate", "--config"])
        .arg(&good)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("(M-1)N >= 12"));
    assert!(stdout.contains("config is identifiable"));

    // coplanar topology: rank(C·U_N) = 2
    let flat = tmp.path().join("flat.toml");
    std::fs::write(
        &flat,
        r#"
topology = [[1.0, 6.0, 7.0, 6.0], [0.0, 0.0, 5.0, 5.0], [0.0, 0.0, 0.0, 0.0]]
"#,
    )
    .unwrap();
    let output = rigidloc()
        .args(["validate", "--config"])
        .arg(&flat)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("FAIL"));
}

#[test]
fn run_rejects_malformed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "definitely_not_a_field = 1\n");
    let output = rigidloc()
        .args(["run", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("error"));
}

#[test]
fn demo_runs_both_perturbation_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("demo");
    let status = rigidloc()
        .args(["demo", "--n-exp", "20", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for sub in ["unperturbed", "perturbed"] {
        for file in ["summary.csv", "trials.csv", "manifest.txt"] {
            assert!(out.join(sub).join(file).is_file(), "{sub}/{file}");
        }
    }
    let perturbed_manifest = std::fs::read_to_string(out.join("perturbed/manifest.txt")).unwrap();
    assert!(perturbed_manifest.contains("perturbation_std_m=1.0000000000000000e-3"));
}
