//! End-to-end checks of the `exocap` binary: every verb, exit codes, and
//! the single-line machine-parsable error categories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exocap"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate_demo(out_root: &Path) -> PathBuf {
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(fixture("scenarios/demo.txt"))
        .arg("--out")
        .arg(out_root)
        .output()
        .unwrap();
    assert!(out.status.success(), "simulate failed: {}", stderr(&out));
    PathBuf::from(stdout(&out).trim())
}

#[test]
fn simulate_then_validate_passes() {
    let tmp = TempDir::new().unwrap();
    let episode = simulate_demo(tmp.path());
    assert!(episode.join("manifest.txt").exists());

    let out = bin().arg("validate").arg(&episode).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ok"));
    assert!(text.contains("records=90"));
}

#[test]
fn validate_flags_corruption_with_checksum_category() {
    let tmp = TempDir::new().unwrap();
    let episode = simulate_demo(tmp.path());
    let chunk = episode.join("wrist_cam.chunk");
    let mut bytes = std::fs::read(&chunk).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x04;
    std::fs::write(&chunk, &bytes).unwrap();

    let out = bin().arg("validate").arg(&episode).output().unwrap();
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.lines().count() == 1, "expected one error line: {err}");
    assert!(err.starts_with("error: ChecksumMismatch:"), "{err}");
    assert!(err.contains("wrist_cam.chunk"));
}

#[test]
fn validate_scans_dataset_roots() {
    let tmp = TempDir::new().unwrap();
    simulate_demo(tmp.path());
    let out = bin().arg("validate").arg(tmp.path()).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn stats_prints_table_row() {
    let tmp = TempDir::new().unwrap();
    simulate_demo(tmp.path());
    let out = bin()
        .args(["stats"])
        .arg(tmp.path())
        .args(["--task", "demo"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("succ/trials"));
    assert!(text.contains("1/1"));
}

#[test]
fn stats_unknown_task_errors() {
    let tmp = TempDir::new().unwrap();
    simulate_demo(tmp.path());
    let out = bin()
        .args(["stats"])
        .arg(tmp.path())
        .args(["--task", "nosuch"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: NoSuchTask:"));
}

#[test]
fn calibrate_recovers_fixture_transform() {
    let out = bin()
        .args(["calibrate", "--pairs"])
        .arg(fixture("pairs.txt"))
        .args(["--min-pairs", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("pairs: 12"));
    // The fixture was generated from t_calib = (0.10, -0.05, 0.20).
    assert!(text.contains("t_calib translation_m: 0.10000000000"));
    assert!(text.contains("residual translation_m"));
}

#[test]
fn calibrate_too_few_pairs_errors() {
    let out = bin()
        .args(["calibrate", "--pairs"])
        .arg(fixture("pairs.txt"))
        .args(["--min-pairs", "50"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: TooFewPairs:"));
}

#[test]
fn record_runs_sim_sources_and_rejects_others() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["record", "--config"])
        .arg(fixture("scenarios/demo.txt"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let config = tmp.path().join("hw.txt");
    std::fs::write(&config, "source: can_bus\nduration_s: 1\n").unwrap();
    let out = bin()
        .args(["record", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: UnsupportedSource:"));
}

#[test]
fn replay_reports_chunks_and_totals() {
    let tmp = TempDir::new().unwrap();
    let episode = simulate_demo(tmp.path());
    let out = bin()
        .arg("replay")
        .arg(&episode)
        .arg("--envelope")
        .arg(fixture("envelope.txt"))
        .args(["--chunk-len", "30", "--sink", "recording"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("90 records -> 3 chunks"));
    assert!(text.contains("recording sink stored 90 samples"));
    assert!(text.contains("replayed 90 steps"));
}

#[test]
fn replay_aborts_on_tight_workspace() {
    let tmp = TempDir::new().unwrap();
    let episode = simulate_demo(tmp.path());
    // The arc has radius 0.35 m; a 5 cm box cannot contain it.
    let envelope = tmp.path().join("tight.txt");
    std::fs::write(
        &envelope,
        "workspace_min: -0.05 -0.05 -0.05\nworkspace_max: 0.05 0.05 0.05\n\
         max_speed_mps: 2.0\nmax_joint_delta_rad: 0.5\n",
    )
    .unwrap();
    let out = bin()
        .arg("replay")
        .arg(&episode)
        .arg("--envelope")
        .arg(&envelope)
        .args(["--chunk-len", "30"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: SafetyAbort:"), "{}", stderr(&out));
}

#[test]
fn replay_refuses_episodes_with_action_gaps() {
    let tmp = TempDir::new().unwrap();
    // Stall the joints stream so the action streams contain gaps.
    let scenario = tmp.path().join("gappy.txt");
    std::fs::write(
        &scenario,
        "duration_s: 3\nseed: 3\ntask: gappy\nstall: hand 1.0 2.5\nsource: sim\n",
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let episode = PathBuf::from(stdout(&out).trim());

    let out = bin()
        .arg("replay")
        .arg(&episode)
        .arg("--envelope")
        .arg(fixture("envelope.txt"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: GapInActions:"), "{}", stderr(&out));
}

#[test]
fn stall_scenario_still_validates() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(fixture("scenarios/stall.txt"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let episode = PathBuf::from(stdout(&out).trim());
    let out = bin().arg("validate").arg(&episode).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    // Gap markers are valid content, not corruption.
    assert!(!text.contains("gaps=0"), "stall should leave gaps: {text}");
}

#[test]
fn missing_scenario_file_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["simulate", "--scenario", "/definitely/not/here.txt", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: IoError:"));
}
