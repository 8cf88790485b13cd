use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use themis_core::synthetic::{level_shift_series, LevelShiftSpec};

fn themis(args: &[&str]) -> Output {
    themis_env(args, None)
}

fn themis_env(args: &[&str], out_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_themis"));
    cmd.args(args).env_remove("THEMIS_OUT_DIR");
    if let Some(root) = out_root {
        cmd.env("THEMIS_OUT_DIR", root);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 2048-point level-shift series and labels; returns their paths.
fn fixture(dir: &Path) -> (String, String) {
    let spec = LevelShiftSpec {
        len: 2048,
        events: 2,
        min_gap: 128,
        cover_blocks: None,
        seed: 5,
        ..Default::default()
    };
    let (series, labels, _) = level_shift_series(&spec).unwrap();
    let s = dir.join("series.csv");
    let l = dir.join("labels.csv");
    series.write_csv(&s).unwrap();
    labels.write_csv(&l).unwrap();
    (s.display().to_string(), l.display().to_string())
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn scores(file: &Path) -> Vec<f64> {
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn constant_series_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("flat.csv");
    fs::write(&series, format!("value\n{}", "3.5\n".repeat(1024))).unwrap();
    let out_dir = path(dir.path(), "run");
    let out = themis(&[
        "score",
        "--series",
        series.to_str().unwrap(),
        "--adapter",
        "spectral",
        "--k",
        "2",
        "--batch-windows",
        "2",
        "--out",
        &out_dir,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let s = scores(&dir.path().join("run/scores.csv"));
    assert_eq!(s.len(), 1024);
    assert!(s.iter().all(|&v| v == 0.0));
}

#[test]
fn detect_is_byte_for_byte_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (s, l) = fixture(dir.path());
    for (run, jobs) in [("a", "1"), ("b", "3")] {
        let out = themis(&[
            "detect",
            "--series",
            &s,
            "--labels",
            &l,
            "--batch-windows",
            "1",
            "--jobs",
            jobs,
            "--out",
            &path(dir.path(), run),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["scores.csv", "predictions.csv", "threshold.json", "report.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fixture(dir.path());
    let missing = path(dir.path(), "nope.csv");
    for args in [
        vec!["score", "--series", missing.as_str()],
        vec!["score", "--series", s.as_str(), "--adapter", "bogus"],
        vec!["score", "--series", s.as_str(), "--window", "0"],
        vec!["detect", "--series", s.as_str(), "--spot-q", "2"],
        vec!["score"],
        vec!["frobnicate"],
    ] {
        let out = themis(&args);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
    }
    assert_eq!(code(&themis(&["--help"])), 0);
    assert_eq!(code(&themis(&["--version"])), 0);
}

#[test]
fn numerical_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // finite input whose context statistics overflow
    let series = dir.path().join("huge.csv");
    let rows: String = (0..1024).map(|i| if i % 2 == 0 { "1.7e308\n" } else { "-1.7e308\n" }).collect();
    fs::write(&series, format!("value\n{rows}")).unwrap();
    let out = themis(&["score", "--series", series.to_str().unwrap(), "--out", &path(dir.path(), "run")]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn unreadable_calibration_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fixture(dir.path());
    let calib = dir.path().join("calib.csv");
    fs::write(&calib, "score\n0.1\nNaN\n0.3\n").unwrap();
    let out = themis(&[
        "detect",
        "--series",
        &s,
        "--adapter",
        "mean",
        "--calibration-file",
        calib.to_str().unwrap(),
        "--out",
        &path(dir.path(), "run"),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fixture(dir.path());
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        format!("# test config\nseries = {s}\nadapter = trimmed\nalpha = 0.1\nbatch_windows = 2\nseed = 9\n"),
    )
    .unwrap();
    let out = themis(&[
        "score",
        "--config",
        cfg.to_str().unwrap(),
        "--batch-windows",
        "1",
        "--out",
        &path(dir.path(), "run"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    let config = &manifest["config"];
    assert_eq!(config["batch_windows"], 1);
    assert_eq!(config["seed"], 9);
    assert_eq!(config["adapter"]["adapter"], "trimmed_topk");
    assert_eq!(config["adapter"]["alpha"], 0.1);

    fs::write(&cfg, format!("series = {s}\nwindow_size = 64\n")).unwrap();
    assert_eq!(code(&themis(&["score", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fixture(dir.path());
    let root = dir.path().join("outputs");
    let out = themis_env(&["score", "--series", &s, "--adapter", "mean"], Some(&root));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(root.join("score/scores.csv").exists());
    assert!(root.join("score/manifest.json").exists());
}

#[test]
fn labels_without_anomalies_still_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fixture(dir.path());
    let labels = dir.path().join("zeros.csv");
    fs::write(&labels, format!("label\n{}", "0\n".repeat(2048))).unwrap();
    let out = themis(&[
        "detect",
        "--series",
        &s,
        "--labels",
        labels.to_str().unwrap(),
        "--adapter",
        "mean",
        "--out",
        &path(dir.path(), "run"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["empty_truth"], true);
    assert_eq!(report["f1"], 0.0);
}

#[test]
fn plot_data_reports_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = themis(&["plot-data", "--run-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("manifest.json"), "{}", stderr(&out));
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let (s, l) = fixture(dir.path());
    let out = themis(&[
        "sweep",
        "--series",
        &s,
        "--labels",
        &l,
        "--adapter",
        "spectral",
        "--k",
        "2,5",
        "--batch-windows",
        "1,2",
        "--out",
        &path(dir.path(), "sweep"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("sweep/results.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.starts_with("spectral,")));
}

#[test]
fn embed_ref_then_score_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fixture(dir.path());
    let them = path(dir.path(), "emb.them");
    let out = themis(&["embed-ref", "--series", &s, "--out", &them]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = themis(&[
        "score",
        "--series",
        &s,
        "--embeddings",
        &them,
        "--batch-windows",
        "1",
        "--out",
        &path(dir.path(), "run"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // a file plus reference-embedder flags is ambiguous
    let out = themis(&["score", "--series", &s, "--embeddings", &them, "--ref-dim", "8"]);
    assert_eq!(code(&out), 1);
}
