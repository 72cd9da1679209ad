use std::f64::consts::PI;
use std::process::Command;

use livecast_core::audio::PcmBuffer;
use livecast_core::event::{EventKind, LiveEvent};
use livecast_core::metrics::RunReport;
use serde_json::Value;

fn run(bin: &str, args: &[&str]) -> std::process::Output {
    let out = Command::new(bin).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{bin} {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn loadgen_writes_event_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("workload.json");
    let p = path.to_str().unwrap();
    let args = [
        "--duration",
        "600",
        "--rate",
        "12",
        "--gift-peak",
        "50",
        "--seed",
        "42",
        "--storm-probability",
        "1",
        "--out",
        p,
    ];
    run(env!("CARGO_BIN_EXE_loadgen"), &args);
    let text = std::fs::read_to_string(&path).unwrap();
    let events: Vec<LiveEvent> = serde_json::from_str(&text).unwrap();
    assert!(events.iter().all(|e| e.validate().is_ok()));
    assert_eq!(events.iter().filter(|e| e.kind == EventKind::Gift).count(), 50);
    let danmaku = events.iter().filter(|e| e.kind == EventKind::Danmaku).count() as f64;
    assert!((danmaku - 7_200.0).abs() < 5.0 * 7_200f64.sqrt(), "{danmaku}");

    // same seed, same bytes
    let again = dir.path().join("again.json");
    let mut args2 = args;
    args2[11] = again.to_str().unwrap();
    run(env!("CARGO_BIN_EXE_loadgen"), &args2);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());

    let raw: Vec<Value> = serde_json::from_str(&text).unwrap();
    for key in ["kind", "timestamp", "user", "content", "count"] {
        assert!(raw[0].get(key).is_some(), "{key}");
    }
}

#[test]
fn loadgen_rejects_bad_profile() {
    let out = Command::new(env!("CARGO_BIN_EXE_loadgen"))
        .args(["--duration", "10", "--storm-probability", "2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("storm_probability"));
}

#[test]
fn audiometer_reports_sine_loudness() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sine.wav");
    let samples: Vec<i16> = (0..480_000)
        .map(|i| (32767.0 * (2.0 * PI * 997.0 * f64::from(i) / 48_000.0).sin()).round() as i16)
        .collect();
    PcmBuffer::new(samples, 1, 48_000).unwrap().write_wav(&path).unwrap();

    let out = run(env!("CARGO_BIN_EXE_audiometer"), &["report", path.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let lufs = v["integrated_lufs"].as_f64().unwrap();
    assert!((lufs - -3.01).abs() <= 0.1, "{lufs}");
    assert!(v["true_peak_dbtp"].as_f64().unwrap() > -0.1);
    assert!(v["gated_block_count"].as_u64().unwrap() > 0);
    assert_eq!(v["below_gate"], Value::Bool(false));
}

#[test]
fn audiometer_reports_silence_as_null() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("silence.wav");
    PcmBuffer::silence(48_000, 2, 48_000).unwrap().write_wav(&path).unwrap();
    let out = run(env!("CARGO_BIN_EXE_audiometer"), &["report", path.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["integrated_lufs"], Value::Null);
    assert_eq!(v["below_gate"], Value::Bool(true));
}

#[test]
fn bench_testcase1_drops_without_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    run(
        env!("CARGO_BIN_EXE_bench"),
        &["run", "--profile", "testcase1", "--report", path.to_str().unwrap()],
    );
    let report = RunReport::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report.version, 1);
    assert_eq!(report.overlap_rate, 0.0);
    assert!(report.drop_count > 0);
    assert_eq!(report.offered, report.emitted + report.drop_count);
    assert!(report.wall.elapsed_secs > 0.0);
    assert!(!report.wall.generated_at.is_empty());
}

#[test]
fn bench_with_playlist_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let playlist = dir.path().join("songs.json");
    std::fs::write(
        &playlist,
        r#"[{"name":"晚风","duration":150},{"name":"星河","duration":180}]"#,
    )
    .unwrap();
    let report = |name: &str| {
        let path = dir.path().join(name);
        run(
            env!("CARGO_BIN_EXE_bench"),
            &[
                "run",
                "--profile",
                "testcase1",
                "--seed",
                "7",
                "--persona",
                "shiguang",
                "--playlist",
                playlist.to_str().unwrap(),
                "--report",
                path.to_str().unwrap(),
            ],
        );
        RunReport::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
    };
    let a = report("a.json");
    let b = report("b.json");
    assert_eq!(a.without_wall_clock(), b.without_wall_clock());
    assert_eq!(a.config.seed, 7);
    assert_eq!(a.segments.songs, 2);
    assert_eq!(a.segments.spoken + a.segments.skipped, a.segments.planned);
}

#[test]
fn bench_rejects_unknown_profile() {
    let out = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["run", "--profile", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown profile"));
}
