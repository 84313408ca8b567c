use std::fs;
use std::path::Path;

use spikedict::cli::run;
use spikedict::formats::{load_dictionary, read_events, read_history};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn spikedict(dir: &Path, args: &[&str]) -> Outcome {
    let mut argv = vec!["spikedict".to_string()];
    argv.extend(args.iter().map(|a| {
        if a.ends_with(".f32") || a.ends_with(".csv") || a.ends_with(".json") {
            dir.join(a).display().to_string()
        } else {
            a.to_string()
        }
    }));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = spikedict(dir, args);
    assert_eq!(o.code, 0, "{args:?}: {}", o.stderr);
    o.stdout
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikedict(dir.path(), &["sort", "--unknown-flag"]);
    assert_eq!(o.code, 1);
    assert!(o.stdout.is_empty());
    assert!(o.stderr.contains("unknown-flag"));
    assert_eq!(spikedict(dir.path(), &["frobnicate"]).code, 1);
    assert_eq!(spikedict(dir.path(), &[]).code, 1);
    assert_eq!(spikedict(dir.path(), &["bound", "--C", "5", "--s", "6"]).code, 1);
    assert_eq!(spikedict(dir.path(), &["--help"]).code, 0);
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"seed": 1, "typo": true}"#).unwrap();
    let o = spikedict(dir.path(), &["--config", "cfg.json", "bound"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("typo"), "{}", o.stderr);
}

#[test]
fn missing_or_corrupt_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikedict(
        dir.path(),
        &["sort", "--signal", "none.f32", "--dictionary", "none.json", "--events", "e.csv"],
    );
    assert_eq!(o.code, 2);
    assert!(o.stderr.starts_with("error:"));
    fs::write(dir.path().join("bad.f32"), [0u8; 7]).unwrap();
    fs::write(
        dir.path().join("bad.meta.json"),
        r#"{"sampling_rate_hz": 1000.0, "num_samples": 2, "units": "mV"}"#,
    )
    .unwrap();
    let o = spikedict(
        dir.path(),
        &["preprocess", "--input", "bad.f32", "--output", "out.f32"],
    );
    assert_eq!(o.code, 2);
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--no-noise", "--windows", "2", "--silent-windows", "2", "--signal", "s.f32", "--truth", "t.csv", "--dictionary-out", "d.json"],
    );
    let o = spikedict(
        dir.path(),
        &["learn", "--signal", "s.f32", "--init", "d.json", "--window-length", "30000", "--residual-threshold", "1", "--dictionary", "o.json", "--history", "h.csv"],
    );
    assert_eq!(o.code, 3, "{}", o.stderr);
}

#[test]
fn bound_prints_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["bound", "--C", "5", "--s", "3", "--lambda", "5", "--delta", "0.001"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[6], "922");
    let t: f64 = row[7].parse().unwrap();
    assert!((t - 61.4).abs() < 0.05);
    assert_eq!(row[8], "1 min. 1 secs.");

    let grid = ok(dir.path(), &["bound"]);
    assert_eq!(grid.lines().count(), 10);
    let text = ok(dir.path(), &["bound", "--format", "text", "--log", "10"]);
    assert!(text.contains("20 Hz"));
}

#[test]
fn simulate_sort_eval_high_snr() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = json(&ok(
        d,
        &["--seed", "21", "simulate", "--windows", "6", "--snr-db", "20", "--signal", "s.f32", "--truth", "t.csv", "--dictionary-out", "d.json"],
    ));
    assert!(sim["num_events"].as_u64().unwrap() > 50);
    ok(d, &["sort", "--signal", "s.f32", "--dictionary", "d.json", "--events", "e.csv"]);
    let summary = json(&ok(
        d,
        &["eval", "--truth", "t.csv", "--detections", "e.csv", "--dictionary", "d.json", "--report", "r.csv"],
    ));
    let miss = summary["true_miss"].as_f64().unwrap();
    assert!(miss < 0.02, "true miss {miss}");
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(report.starts_with("neuron_id,threshold,true_miss,false_alarm\n"));
    assert!(report.contains("\npooled,0.0,"));

    let b = json(&ok(d, &["eval", "--truth", "t.csv", "--baseline", "--signal", "s.f32", "--report", "rb.csv"]));
    assert_eq!(b["method"], "baseline");
}

#[test]
fn pipeline_is_byte_reproducible() {
    let run_all = |dir: &Path| {
        ok(dir, &["--seed", "5", "simulate", "--windows", "4", "--snr-db", "12", "--templates", "two_30", "--signal", "s.f32", "--truth", "t.csv", "--dictionary-out", "d.json"]);
        ok(dir, &["preprocess", "--input", "s.f32", "--output", "p.f32", "--exclude", "0.5:0.7", "--init", "i.json", "--neurons", "2", "--template-length", "30"]);
        ok(dir, &["--seed", "5", "learn", "--signal", "s.f32", "--neurons", "2", "--template-length", "30", "--iterations", "3", "--dictionary", "l.json", "--history", "h.csv", "--events", "le.csv"]);
        ok(dir, &["sort", "--signal", "s.f32", "--dictionary", "l.json", "--events", "e.csv"]);
        ok(dir, &["eval", "--truth", "t.csv", "--detections", "e.csv", "--dictionary", "l.json", "--report", "r.csv"]);
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    for f in ["s.f32", "s.meta.json", "t.csv", "p.f32", "i.json", "l.json", "h.csv", "le.csv", "e.csv", "r.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    assert_eq!(read_history(&a.path().join("h.csv")).unwrap().len(), 3);
    assert_eq!(load_dictionary(&a.path().join("l.json")).unwrap().num_atoms(), 2);
    assert!(!read_events(&a.path().join("e.csv")).unwrap().is_empty());
}

#[test]
fn preprocess_reports_noise() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "2", "simulate", "--windows", "3", "--snr-db", "10", "--silent-windows", "1", "--signal", "s.f32", "--truth", "t.csv"]);
    let rep = json(&ok(d, &["preprocess", "--input", "s.f32", "--output", "p.f32", "--exclude", "2.5:3"]));
    assert_eq!(rep["num_samples"].as_u64().unwrap(), 75_000);
    assert_eq!(rep["noise_source"], "quiet_segment");
    assert!(rep["noise_sigma"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_values_apply_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"seed": 3, "simulate": {"num_windows": 2, "window_length": 5000, "snr_db": null}}"#,
    )
    .unwrap();
    let s = json(&ok(d, &["--config", "cfg.json", "simulate", "--signal", "s.f32", "--truth", "t.csv"]));
    assert_eq!(s["num_samples"], 10_000);
    assert_eq!(s["noise_sigma"], 0.0);
    let s = json(&ok(d, &["--config", "cfg.json", "simulate", "--windows", "3", "--signal", "s.f32", "--truth", "t.csv"]));
    assert_eq!(s["num_samples"], 15_000);
}
