mod common;

use std::fs;
use std::io::Write;
use std::path::Path;

use themis_core::adapters::{AdapterParams, SpectralParams};
use themis_core::dataset_io::{load_labels, load_series, plan_windows, SeriesFormat, TailPolicy};
use themis_core::pipeline::{
    cmd_detect, cmd_embed_ref, cmd_plot_data, cmd_score, load_manifest, read_score_column, run_sweep, EmbeddingSource,
    NormalizeScope, PipelineError, RunConfig, SweepGrid, MANIFEST_FILE, REPORT_FILE, SCORES_FILE,
};
use themis_core::synthetic::{level_shift_series, LevelShiftSpec};

/// 2048 points with two level shifts: four 512-point windows.
fn small_config(dir: &Path) -> RunConfig {
    let spec = LevelShiftSpec {
        len: 2048,
        events: 2,
        min_gap: 128,
        cover_blocks: None,
        seed: 3,
        ..Default::default()
    };
    let (series, labels, _) = level_shift_series(&spec).unwrap();
    series.write_csv(dir.join("series.csv")).unwrap();
    labels.write_csv(dir.join("labels.csv")).unwrap();
    let mut cfg = RunConfig::new(dir.join("series.csv"));
    cfg.labels = Some(dir.join("labels.csv"));
    cfg.batch_windows = 1;
    cfg.adapter = AdapterParams::Spectral(SpectralParams::new(2));
    cfg.out = dir.join("run");
    cfg
}

#[test]
fn loads_73729_rows_and_plans_padded_windows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(&path).unwrap());
    writeln!(f, "a,b").unwrap();
    for t in 0..73_729 {
        writeln!(f, "{},{}", t, (t as f64 * 0.01).sin()).unwrap();
    }
    drop(f);
    let series = load_series(&path, 1, SeriesFormat::Csv).unwrap();
    assert_eq!(series.len(), 73_729);
    assert_eq!(series.values()[100], (100.0f64 * 0.01).sin());

    let plan = plan_windows(series.len(), 512, 512, TailPolicy::PadRepeatLast).unwrap();
    assert_eq!(plan.num_windows(), 145);
    assert_eq!(plan.total_pads(), 145 * 512 - 73_729);
}

#[test]
fn score_writes_scores_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (run, out) = cmd_score(&cfg).unwrap();
    assert_eq!(out.files, [SCORES_FILE, MANIFEST_FILE]);

    let scores = read_score_column(cfg.out.join(SCORES_FILE)).unwrap();
    assert_eq!(scores.len(), 2048);
    assert_eq!(scores, run.scores.scores);
    assert!(scores.iter().all(|s| (0.0..1.0).contains(s)));

    let manifest = load_manifest(cfg.out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.command, "score");
    assert_eq!((manifest.series_len, manifest.windows, manifest.batches), (2048, 4, 4));
    assert_eq!(manifest.config, cfg);
}

#[test]
fn detect_reports_against_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (det, _) = cmd_detect(&cfg).unwrap();
    let report = det.report.unwrap();
    assert!((0.0..=1.0).contains(&report.f1));
    assert!(det.decision.delta >= det.decision.t0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(cfg.out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["f1"].as_f64().unwrap(), report.f1);
}

#[test]
fn global_scope_spans_the_whole_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.normalize_scope = NormalizeScope::Global;
    let (run, _) = cmd_score(&cfg).unwrap();
    let max = run.scores.scores.iter().copied().fold(0.0, f64::max);
    let min = run.scores.scores.iter().copied().fold(1.0, f64::min);
    assert_eq!(min, 0.0);
    assert!(max > 0.999_999 && max < 1.0);
}

#[test]
fn saved_reference_embeddings_reproduce_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let them = dir.path().join("emb.them");
    cmd_embed_ref(&cfg, &them).unwrap();
    assert!(dir.path().join("emb.them.manifest.json").exists());

    let (direct, _) = cmd_score(&cfg).unwrap();
    let mut from_file = cfg.clone();
    from_file.embeddings = EmbeddingSource::File { path: them };
    from_file.out = dir.path().join("run2");
    let (loaded, _) = cmd_score(&from_file).unwrap();
    assert_eq!(direct.scores.scores, loaded.scores.scores);
}

#[test]
fn singleton_sweep_matches_detect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (det, _) = cmd_detect(&cfg).unwrap();
    let rows = run_sweep(&cfg, &SweepGrid::from_config(&cfg)).unwrap();
    assert_eq!(rows.len(), 1);
    let (threshold, report) = rows[0].outcome.as_ref().unwrap();
    assert_eq!(threshold.delta, det.decision.delta);
    assert_eq!(Some(report), det.report.as_ref());
}

#[test]
fn sweep_over_batch_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut grid = SweepGrid::from_config(&cfg);
    grid.batch_windows = vec![1, 4, 16];
    grid.k = vec![2];
    let rows = run_sweep(&cfg, &grid).unwrap();
    let sizes: Vec<usize> = rows.iter().map(|r| r.point.batch_windows).collect();
    assert_eq!(sizes, [1, 4, 16]);
    assert!(rows.iter().all(|r| r.outcome.is_ok()));
}

#[test]
fn plot_data_flattens_a_detect_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.dump_wasm = vec![1];
    cmd_detect(&cfg).unwrap();
    let plots = dir.path().join("plots");
    let report = cmd_plot_data(&cfg.out, &plots).unwrap();
    assert_eq!(report.wasm_batches, [1]);

    let lines = |name: &str| fs::read_to_string(plots.join(name)).unwrap().lines().count();
    assert_eq!(lines("series_with_labels.csv"), 2049);
    assert_eq!(lines("scores_with_threshold.csv"), 2049);
    assert_eq!(lines("wasm_batch_1.csv"), 512 * 512 + 1);
    let second = fs::read_to_string(plots.join("scores_with_threshold.csv")).unwrap();
    let threshold = second.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert!(threshold.parse::<f64>().is_ok());
}

#[test]
fn plot_data_needs_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    match cmd_plot_data(dir.path(), dir.path()) {
        Err(PipelineError::MissingArtifacts { missing, .. }) => {
            assert!(missing.contains(&MANIFEST_FILE.to_string()));
        }
        other => panic!("expected missing artifacts, got {other:?}"),
    }
}

#[test]
fn labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let labels = load_labels(cfg.labels.as_ref().unwrap()).unwrap();
    assert_eq!(labels.len(), 2048);
    assert!(labels.count_ones() >= 64);
}
