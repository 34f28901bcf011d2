use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn holocrowd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holocrowd"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = holocrowd(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn report_value(report: &str, key: &str) -> Option<f64> {
    report
        .lines()
        .filter_map(|l| l.split_once(','))
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
}

#[test]
fn umn_like_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--recipe", "umn-like", "--out", "umn"], d);
    ok(&["track", "umn"], d);
    ok(&["features", "umn"], d);
    ok(&["train-gmm", "--features", "umn", "--train-frames", "200", "--out", "gmm.json"], d);
    ok(&["eval-umn", "umn", "--out", "eval"], d);

    let report = fs::read_to_string(d.join("eval/report.csv")).unwrap();
    assert!(report.starts_with("# holocrowd "), "{report}");
    let auc = report_value(&report, "auc").expect("auc field");
    assert!((0.0..=1.0).contains(&auc));
    assert!(fs::read_to_string(d.join("eval/roc.svg")).unwrap().contains("<polyline"));

    let scores = ok(&["score", "--model", "gmm.json", "--features", "umn/scene1_clip1/features.csv"], d);
    assert_eq!(scores.lines().filter(|l| !l.starts_with('#')).count(), 451);

    // same inputs and seed, same bytes
    ok(&["eval-umn", "umn", "--out", "again"], d);
    for f in ["report.csv", "roc.csv", "roc.svg"] {
        assert_eq!(fs::read(d.join("eval").join(f)).unwrap(), fs::read(d.join("again").join(f)).unwrap(), "{f}");
    }
    let clip = "umn/scene2_clip1";
    ok(&["track", &format!("{clip}/frames"), "--out", "t.jsonl"], d);
    assert_eq!(fs::read(d.join("t.jsonl")).unwrap(), fs::read(d.join(clip).join("tracklets.jsonl")).unwrap());
}

fn feature_file(path: &Path, columns: &[&str], rows: usize) {
    let mut s = format!("frame,valid,{}\n", columns.join(","));
    for i in 0..rows {
        let _ = write!(s, "{i},1");
        for (j, _) in columns.iter().enumerate() {
            let v = ((i * 7 + j * 13) % 17) as f64 / 17.0 + j as f64;
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

#[test]
fn ablated_model_rejects_full_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    feature_file(&d.join("f3.csv"), &["collectiveness", "conflict", "mean_speed"], 120);
    feature_file(&d.join("f4.csv"), &["collectiveness", "conflict", "density", "mean_speed"], 120);
    ok(&["train-gmm", "--features", "f3.csv", "--out", "m3.json"], d);
    ok(&["score", "--model", "m3.json", "--features", "f3.csv", "--out", "s.csv"], d);

    let out = holocrowd(&["score", "--model", "m3.json", "--features", "f4.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimension"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(holocrowd(&["eval-cv", "x", "--out", "y", "--bogus"], d).status.code(), Some(1));
    assert_eq!(holocrowd(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(holocrowd(&["features", "t.jsonl"], d).status.code(), Some(1));
    assert_eq!(holocrowd(&["eval-cv", "missing", "--out", "y"], d).status.code(), Some(2));
    assert_eq!(holocrowd(&["--grid", "0x4", "eval-cv", "missing", "--out", "y"], d).status.code(), Some(2));
    assert_eq!(holocrowd(&["--help"], d).status.code(), Some(0));
}

#[test]
fn training_on_too_few_frames_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    feature_file(&d.join("f.csv"), &["collectiveness", "conflict", "density", "mean_speed"], 10);
    let out = holocrowd(&["train-gmm", "--features", "f.csv", "--out", "m.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("m.json").exists());
}
