//! Binary-level checks: exit codes, error serialization, determinism of the
//! artifacts, and the preset registry invariants.

use std::path::{Path, PathBuf};
use std::process::Command;

use nds_lab::presets;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nds-lab"))
}

fn preset_path(preset: &presets::Preset) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(preset.file)
}

#[test]
fn negative_presets_exit_with_documented_codes() {
    let dir = tempfile::tempdir().unwrap();
    for preset in presets::PRESETS.iter().filter(|p| p.expect_exit != 0) {
        let out = dir.path().join(preset.name);
        let result = binary()
            .arg(preset.experiment)
            .arg("--config")
            .arg(preset_path(preset))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        let code = result.status.code().unwrap();
        assert_eq!(
            code, preset.expect_exit,
            "{}: exit {code}, expected {} (stderr: {})",
            preset.name,
            preset.expect_exit,
            String::from_utf8_lossy(&result.stderr)
        );
        if preset.expect_exit == 3 {
            // the error object names the failure
            let parsed: serde_json::Value =
                serde_json::from_slice(&result.stderr).expect("serialized error object");
            assert!(parsed["error"].is_string(), "{}: {parsed}", preset.name);
            assert_ne!(parsed["error"], "Validation");
        }
    }
}

#[test]
fn mismatched_subcommand_is_a_validation_error() {
    let preset = presets::find("volume-linear").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = binary()
        .arg("entropy")
        .arg("--config")
        .arg(preset_path(preset))
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(result.status.code().unwrap(), 2);
}

#[test]
fn identical_config_and_seed_reproduce_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let preset = presets::find("volume-perturbed").unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = binary()
            .arg(preset.experiment)
            .arg("--config")
            .arg(preset_path(preset))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(out.join("volume.csv")).unwrap(),
            std::fs::read(out.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "CSV bytes differ between runs");
    assert_eq!(outputs[0].1, outputs[1].1, "summary bytes differ between runs");
}

#[test]
fn config_echo_matches_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let preset = presets::find("expansivity-doubling").unwrap();
    let out = dir.path().join("echo");
    let status = binary()
        .arg(preset.experiment)
        .arg("--config")
        .arg(preset_path(preset))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let original: serde_json::Value = serde_json::from_str(preset.content).unwrap();
    assert_eq!(echoed, original);
}

#[test]
fn list_presets_prints_the_registry() {
    let result = binary().arg("list-presets").output().unwrap();
    assert!(result.status.success());
    let text = String::from_utf8(result.stdout).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert!(lines.len() >= 6, "expected at least 6 presets");
    for preset in presets::PRESETS {
        assert!(text.contains(preset.name), "{} not listed", preset.name);
    }
}

#[test]
fn preset_files_exist_and_match_the_embedded_copies() {
    for preset in presets::PRESETS {
        let path = preset_path(preset);
        assert!(path.exists(), "{} missing from the repository", preset.file);
        let on_disk = std::fs::read_to_string(&path).unwrap();
        assert_eq!(on_disk, preset.content, "{} drifted from the binary", preset.name);
        // every preset parses and matches its declared experiment
        let config = nds_lab::config::ExperimentConfig::parse(&on_disk).unwrap();
        assert_eq!(config.experiment, preset.experiment, "{}", preset.name);
    }
}

#[test]
fn presets_cover_every_acceptance_row() {
    let mut covered = [false; 11];
    for preset in presets::PRESETS {
        for &row in preset.covers {
            covered[row as usize] = true;
        }
    }
    for (row, seen) in covered.iter().enumerate().skip(1) {
        assert!(seen, "acceptance row {row} has no covering preset");
    }
}

#[test]
fn thread_cap_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let preset = presets::find("pressure-periodic-zero").unwrap();
    let out = dir.path().join("threads");
    let status = binary()
        .arg(preset.experiment)
        .arg("--config")
        .arg(preset_path(preset))
        .arg("--out")
        .arg(&out)
        .env("NDS_LAB_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("summary.json").exists());
}
