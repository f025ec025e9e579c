use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios")
}

fn default_scenario() -> PathBuf {
    scenarios_dir().join("default.edass")
}

fn edass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edass"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_bundled_scenarios() {
    for name in ["default", "blacklist", "unknown", "noiseless"] {
        let path = scenarios_dir().join(format!("{name}.edass"));
        let out = edass(&["validate", s(&path)]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: "));
    }
}

#[test]
fn scenario_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.edass");
    fs::write(&bad, "e-dass-scenario v1\n[run]\nseed = 1\n[[node]]\nid = 1\nx = 1.0\ny = 1.0\n[[node]]\nid = 1\nx = 2.0\ny = 2.0\n").unwrap();
    let out = edass(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate node id 1"));

    let out = edass(&["run", s(&dir.path().join("missing.edass"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = edass(&["run", s(&default_scenario()), "--t-end", "-3"]);
    assert_eq!(out.status.code(), Some(1));

    let out = edass(&["run"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.trace");
    let metrics = dir.path().join("run.metrics");
    let out = edass(&[
        "run",
        s(&default_scenario()),
        "--trace",
        s(&trace),
        "--metrics",
        s(&metrics),
        "--t-end",
        "120",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("# e-dass-trace v1 scenario=default seed=42 nodes=100\n"));
    assert!(text.lines().last().unwrap().starts_with("120.000000 "));
    let summary = fs::read_to_string(&metrics).unwrap();
    assert!(summary.contains(
        "alert_sequence: TrafficSignalOverride,VoiceBroadcast,RedZoneDeclared,BaseStationReport"
    ));

    // Replaying the saved trace reproduces the summary.
    let out = edass(&["metrics", s(&trace), s(&default_scenario())]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);
}

#[test]
fn traces_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a", "b", "c"]
        .iter()
        .map(|n| dir.path().join(format!("{n}.trace")))
        .collect();
    for (p, seed) in paths.iter().zip(["42", "42", "43"]) {
        let out = edass(&[
            "run",
            s(&default_scenario()),
            "--trace",
            s(p),
            "--t-end",
            "90",
            "--seed",
            seed,
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |p: &PathBuf| fs::read(p).unwrap();
    assert_eq!(read(&paths[0]), read(&paths[1]));
    assert_ne!(read(&paths[0]), read(&paths[2]));
}

#[test]
fn metrics_against_wrong_scenario_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.trace");
    let noiseless = scenarios_dir().join("noiseless.edass");
    assert_eq!(
        edass(&["run", s(&noiseless), "--trace", s(&trace)])
            .status
            .code(),
        Some(0)
    );
    let out = edass(&["metrics", s(&trace), s(&default_scenario())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not belong"));

    let garbled = dir.path().join("garbled.trace");
    fs::write(&garbled, "0.000000 node:1 settle seq=0\nnot a line\n").unwrap();
    let out = edass(&["metrics", s(&garbled), s(&default_scenario())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn several_scenarios_run_in_parallel_into_directories() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let metrics = dir.path().join("metrics");
    let a = scenarios_dir().join("noiseless.edass");
    let b = scenarios_dir().join("blacklist.edass");
    let out = edass(&[
        "run",
        s(&a),
        s(&b),
        "--trace",
        s(&traces),
        "--metrics",
        s(&metrics),
        "--t-end",
        "60",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for stem in ["noiseless", "blacklist"] {
        assert!(traces.join(format!("{stem}.trace")).is_file());
        assert!(metrics.join(format!("{stem}.metrics")).is_file());
    }
    let black = fs::read_to_string(metrics.join("blacklist.metrics")).unwrap();
    assert!(black.contains("alert_sequence: PoliceNotify,"));

    // Without output paths both summaries go to stdout, labelled.
    let out = edass(&["run", s(&a), s(&b), "--t-end", "30"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("== ").count(), 2);
}
