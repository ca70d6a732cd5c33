use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy_copy() -> tempfile::TempDir {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/toy");
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
        }
    }
    dir
}

fn tempdrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempdrift")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_all(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["all", "--config", path_str(config), "--out", path_str(out)];
    args.extend_from_slice(extra);
    tempdrift(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn toy_run_succeeds() {
    let fx = toy_copy();
    let out = fx.path().join("out");
    let o = run_all(&fx.path().join("config.json"), &out, &["--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("report/correlations.md").is_file());
}

#[test]
fn missing_config_exits_2() {
    let o = tempdrift(&["all", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config stage"));
}

#[test]
fn unknown_metric_exits_2() {
    let fx = toy_copy();
    let config = fx.path().join("config.json");
    let text = fs::read_to_string(&config).unwrap().replace("\"jaccard\"", "\"kl_divergence\"");
    fs::write(&config, text).unwrap();
    let o = run_all(&config, &fx.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kl_divergence"));
}

#[test]
fn corrupt_tdeb_exits_3_naming_file() {
    let fx = toy_copy();
    let tdeb = fx.path().join("toy.tdeb");
    let mut bytes = fs::read(&tdeb).unwrap();
    bytes[0] = b'X';
    fs::write(&tdeb, bytes).unwrap();
    let out = fx.path().join("out");
    let o = run_all(&fx.path().join("config.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("drift stage") && err.contains("toy.tdeb"), "{err}");
    assert!(out.join(".partial").is_file());
}

#[test]
fn degenerate_data_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: String = (0..10)
        .map(|i| format!("{{\"id\":\"d{i}\",\"text\":\"same\",\"domain\":\"{}\"}}\n", if i < 5 { "A" } else { "B" }))
        .collect();
    fs::write(dir.path().join("c.jsonl"), corpus).unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"corpus_path": "c.jsonl", "segmentation": {"labels": {"A": 1, "B": 2}}, "master_seed": 1, "metrics": ["tfidf_cosine"]}"#,
    )
    .unwrap();
    let o = run_all(&config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn flags_override_config() {
    let fx = toy_copy();
    let config = fx.path().join("config.json");
    let out: PathBuf = fx.path().join("seeded");
    let o = tempdrift(&["segment", "--config", path_str(&config), "--out", path_str(&out), "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifests/T1.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5,"), "{manifest}");
    assert!(!fx.path().join("out").exists());

    let o = tempdrift(&["segment", "--config", path_str(&config), "--out", path_str(&out), "--strict"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_flag_values_are_rejected() {
    let o = tempdrift(&["all", "--config", "x.json", "--drift-split", "half"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tempdrift(&["all", "--config", "x.json", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
