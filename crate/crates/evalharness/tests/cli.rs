use std::path::Path;
use std::process::Command;

use clap::Parser;
use evalharness::{export_scenario, run, Args};
use reboard_core::capture::CaptureVariant;
use reboard_core::eval::EvalReport;
use reboard_core::feedsim::Scenario;

const SHORT: &str = r#"
name = "short"
seed = 3
start_ms = 1760000000000
duration_s = 420

[[stroke]]
at_s = 60
points = [[0.3, 0.4], [0.34, 0.46], [0.38, 0.4], [0.42, 0.46], [0.46, 0.4], [0.5, 0.46], [0.54, 0.4], [0.58, 0.46], [0.58, 0.54], [0.54, 0.6], [0.5, 0.54], [0.46, 0.6], [0.42, 0.54], [0.38, 0.6], [0.34, 0.54], [0.3, 0.6]]

[[walker]]
path = [[30, 480, 130], [42, 140, 130], [100, 140, 130], [103, 330, 130], [140, 330, 130], [144, 480, 130]]

[[lighting]]
start_s = 200
end_s = 400
delta = 40
"#;

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("short.toml");
    std::fs::write(&path, SHORT).unwrap();
    path
}

fn args(argv: &[&str]) -> Args {
    Args::try_parse_from(std::iter::once("evalharness").chain(argv.iter().copied())).unwrap()
}

#[test]
fn scenario_run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let out = dir.path().join("report.json");
    let outcome = run(&args(&[
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--check-ordering",
    ]))
    .unwrap();
    assert!(!outcome.ordering_failed);
    assert!(outcome.table.contains("combined"));
    let report = EvalReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.scenarios.len(), 1);
    let combined = report.overall_for(CaptureVariant::Combined).unwrap();
    assert_eq!((combined.matched, combined.total, combined.false_positives), (1, 1, 0));
    let filtering = report.overall_for(CaptureVariant::FilteringOnly).unwrap();
    assert!(filtering.false_positives > 0);
}

#[test]
fn exported_feed_replays_to_the_same_scores() {
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = write_scenario(dir.path());
    let scenario = Scenario::from_file(&scenario_path).unwrap();
    let feed_dir = dir.path().join("feed");
    let manifest = export_scenario(&scenario, &feed_dir).unwrap();

    let synthetic = run(&args(&["--scenario", scenario_path.to_str().unwrap()])).unwrap();
    let replayed = run(&args(&[
        "--manifest",
        manifest.to_str().unwrap(),
        "--truth",
        feed_dir.join("truth.json").to_str().unwrap(),
        "--camera-config",
        feed_dir.join("camera.toml").to_str().unwrap(),
    ]))
    .unwrap();
    for v in CaptureVariant::ALL {
        let a = synthetic.report.overall_for(v).unwrap();
        let b = replayed.report.overall_for(v).unwrap();
        assert_eq!(a.detections, b.detections, "{v}");
        assert_eq!(a.false_positives, b.false_positives, "{v}");
    }
}

#[test]
fn variant_subset_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let outcome = run(&args(&["--scenario", scenario.to_str().unwrap(), "--variants", "combined"])).unwrap();
    assert_eq!(outcome.report.overall.len(), 1);
    assert!(run(&args(&[])).is_err());
    assert!(Args::try_parse_from(["evalharness", "--variants", "bogus"]).is_err());
    assert!(Args::try_parse_from(["evalharness", "--manifest", "m.tsv"]).is_err());
    let empty = tempfile::tempdir().unwrap();
    assert!(run(&args(&["--suite", empty.path().to_str().unwrap()])).is_err());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_evalharness");
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let ok = Command::new(bin).args(["--scenario", scenario.to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("filtering_only"));

    // with one variant the ordering cannot hold
    let status = Command::new(bin)
        .args(["--scenario", scenario.to_str().unwrap(), "--variants", "combined", "--check-ordering"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = Command::new(bin).args(["--scenario", "/nonexistent.toml"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
}
