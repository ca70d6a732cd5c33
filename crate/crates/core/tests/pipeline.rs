use std::fs;
use std::path::{Path, PathBuf};

use tempdrift_core::config::{CorrelateWith, DriftSplit, Overrides};
use tempdrift_core::pipeline::{self, inventory, Category, Stage, PARTIAL_MARKER, SUMMARY_FILE};

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

/// Copy of the toy fixture in a fresh temporary directory.
fn toy_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(toy_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
        }
    }
    dir
}

fn run(config: &Path, out: &Path, stage: Stage, extra: Overrides) -> Result<(), pipeline::PipelineError> {
    let overrides = Overrides { output_dir: Some(out.to_path_buf()), ..extra };
    pipeline::run_pipeline(config, &overrides, stage, Some(2)).map(|_| ())
}

fn tree(dir: &Path) -> Vec<(String, String)> {
    inventory(dir).unwrap().into_iter().map(|f| (f.path, f.sha256)).collect()
}

#[test]
fn toy_fixture_produces_reports() {
    let fx = toy_copy();
    let out = fx.path().join("out");
    run(&fx.path().join("config.json"), &out, Stage::All, Overrides::default()).unwrap();
    for rel in ["report/correlations.md", "report/correlations.csv", "manifests/T1.json", "manifests/T4.json"] {
        assert!(out.join(rel).is_file(), "{rel}");
    }
    let heatmaps = fs::read_dir(out.join("report"))
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name().into_string().unwrap();
            name.starts_with("heatmap_") && !name.starts_with("heatmap_delta_")
        })
        .count();
    assert_eq!(heatmaps, 4);
    assert!(!out.join(PARTIAL_MARKER).exists());

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 42);
    assert_eq!(summary["warnings"].as_array().unwrap().len(), 1);

    let md = fs::read_to_string(out.join("report/correlations.md")).unwrap();
    assert!(md.starts_with("| Drift metric | F1 | RougeL |"));
    assert_eq!(md.lines().count(), 6);

    let segments: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("segments.json")).unwrap()).unwrap();
    assert_eq!(segments["skipped"].as_array().unwrap().len(), 5);
}

#[test]
fn stages_compose_to_the_full_run() {
    let fx = toy_copy();
    let config = fx.path().join("config.json");
    let (full, staged) = (fx.path().join("full"), fx.path().join("staged"));
    run(&config, &full, Stage::All, Overrides::default()).unwrap();
    for stage in Stage::SEQUENCE {
        run(&config, &staged, stage, Overrides::default()).unwrap();
    }
    assert_eq!(tree(&full), tree(&staged));
}

#[test]
fn seed_changes_observations_but_not_one_shot_values() {
    let fx = toy_copy();
    let config = fx.path().join("config.json");
    let (a, b) = (fx.path().join("a"), fx.path().join("b"));
    run(&config, &a, Stage::All, Overrides::default()).unwrap();
    run(&config, &b, Stage::All, Overrides { master_seed: Some(7), ..Overrides::default() }).unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    // Domains are already equal in size, so full-domain values do not depend on the seed.
    assert_eq!(read(&a, "drift/one_shot.csv"), read(&b, "drift/one_shot.csv"));
    assert_ne!(read(&a, "drift/observations.csv"), read(&b, "drift/observations.csv"));
    assert_ne!(read(&a, "manifests/T2.json"), read(&b, "manifests/T2.json"));
}

#[test]
fn observation_files_have_protocol_shape() {
    let fx = toy_copy();
    let out = fx.path().join("out");
    run(&fx.path().join("config.json"), &out, Stage::All, Overrides::default()).unwrap();
    let obs = fs::read_to_string(out.join("drift/observations.csv")).unwrap();
    // 4 metrics x (12 ordered pairs + 4 in-domain) x 15 observations.
    assert_eq!(obs.lines().count(), 1 + 4 * 16 * 15);
    let sig = fs::read_to_string(out.join("drift/significance.csv")).unwrap();
    assert_eq!(sig.lines().count(), 1 + 4 * 12);
    let one_shot = fs::read_to_string(out.join("drift/one_shot.csv")).unwrap();
    assert_eq!(one_shot.lines().count(), 1 + 4 * 10);
}

#[test]
fn train_split_and_observation_mean_options() {
    let fx = toy_copy();
    let config = fx.path().join("config.json");
    let (a, b) = (fx.path().join("a"), fx.path().join("b"));
    run(&config, &a, Stage::All, Overrides::default()).unwrap();
    let opts = Overrides {
        drift_split: Some(DriftSplit::Train),
        correlate_with: Some(CorrelateWith::ObsMean),
        ..Overrides::default()
    };
    run(&config, &b, Stage::All, opts).unwrap();
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_ne!(read(&a, "drift/one_shot.csv"), read(&b, "drift/one_shot.csv"));
    assert_ne!(read(&a, "report/correlations.csv"), read(&b, "report/correlations.csv"));
    assert!(read(&b, "report/heatmap_jaccard.svg").contains("observation mean"));
}

#[test]
fn corrupt_tdeb_fails_in_drift_stage() {
    let fx = toy_copy();
    let tdeb = fx.path().join("toy.tdeb");
    let bytes = fs::read(&tdeb).unwrap();
    fs::write(&tdeb, &bytes[..bytes.len() - 7]).unwrap();
    let out = fx.path().join("out");
    let err = run(&fx.path().join("config.json"), &out, Stage::All, Overrides::default()).unwrap_err();
    assert_eq!(err.stage, "drift");
    assert_eq!(err.category, Category::Data);
    assert!(err.message.contains("toy.tdeb"), "{err}");
    let marker = fs::read_to_string(out.join(PARTIAL_MARKER)).unwrap();
    assert!(marker.contains("drift stage"));
    assert!(out.join("domains.json").is_file());
}

#[test]
fn later_stage_without_inputs_is_a_data_error() {
    let fx = toy_copy();
    let err = run(&fx.path().join("config.json"), &fx.path().join("out"), Stage::Drift, Overrides::default()).unwrap_err();
    assert_eq!(err.category, Category::Data);
    assert!(err.message.contains("domains.json"), "{err}");
}

#[test]
fn several_datasets_need_a_selector() {
    let fx = toy_copy();
    let perf = fx.path().join("perf.csv");
    let text = fs::read_to_string(&perf).unwrap();
    let extra: String = text.lines().skip(1).map(|l| l.replacen("toy,", "other,", 1) + "\n").collect();
    fs::write(&perf, text + &extra).unwrap();
    let config = fx.path().join("config.json");
    let err = run(&config, &fx.path().join("a"), Stage::All, Overrides::default()).unwrap_err();
    assert_eq!((err.stage, err.category), ("correlate", Category::Config));

    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
    cfg["dataset"] = "other".into();
    fs::write(&config, cfg.to_string()).unwrap();
    run(&config, &fx.path().join("b"), Stage::All, Overrides::default()).unwrap();
}

#[test]
fn strict_assignment_rejects_stray_documents() {
    let fx = toy_copy();
    let opts = Overrides { strict: true, ..Overrides::default() };
    let err = run(&fx.path().join("config.json"), &fx.path().join("out"), Stage::All, opts).unwrap_err();
    assert_eq!((err.stage, err.category), ("segment", Category::Data));
}

#[test]
fn zero_tfidf_vector_is_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: String = (0..20)
        .map(|i| format!("{{\"id\":\"d{i}\",\"text\":\"same words\",\"domain\":\"{}\"}}\n", if i < 10 { "A" } else { "B" }))
        .collect();
    fs::write(dir.path().join("c.jsonl"), corpus).unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"corpus_path": "c.jsonl", "segmentation": {"labels": {"A": 1, "B": 2}}, "master_seed": 1, "metrics": ["tfidf_cosine"]}"#,
    )
    .unwrap();
    let err = run(&config, &dir.path().join("out"), Stage::All, Overrides::default()).unwrap_err();
    assert_eq!((err.stage, err.category), ("drift", Category::Numeric));
    assert_eq!(err.exit_code(), 4);
}
