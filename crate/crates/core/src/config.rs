//! Run configuration: a single JSON file plus command-line overrides.
//!
//! Relative paths in the file are resolved against the file's directory.
//! Precedence is flag, then config field, then default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusFormat, Segmentation};
use crate::drift::MetricSpec;
use crate::lexical::TokenizerConfig;
use crate::observe::DEFAULT_OBSERVATIONS;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_OUTPUT_DIR: &str = "tempdrift_out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown metric {0:?} (expected jaccard, tfidf_cosine or embedding/<encoder>/<cosine|euclidean|manhattan>)")]
    UnknownMetric(String),
    #[error("metric {metric} needs embedding_paths[{encoder:?}]")]
    MissingEmbeddingPath { metric: String, encoder: String },
    #[error("{field}: file {path} does not exist")]
    MissingFile { field: String, path: PathBuf },
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSplit {
    /// Measure drift on the whole (equalized) domain.
    #[default]
    All,
    /// Measure drift on the training part of each split manifest only.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelateWith {
    /// The single full-domain measurement of each pair.
    #[default]
    OneShot,
    /// The mean of the pair's cross-domain observations.
    ObsMean,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $text),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
    };
}

text_enum!(DriftSplit { All => "all", Train => "train" });
text_enum!(CorrelateWith { OneShot => "one_shot", ObsMean => "obs_mean" });

/// The file as written by the user, before validation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    corpus_path: PathBuf,
    #[serde(default)]
    corpus_format: Option<String>,
    segmentation: Segmentation,
    master_seed: u64,
    metrics: Vec<String>,
    #[serde(default)]
    test_fraction: Option<f64>,
    #[serde(default)]
    equalize: Option<bool>,
    #[serde(default)]
    drift_split: Option<DriftSplit>,
    #[serde(default)]
    embedding_paths: BTreeMap<String, PathBuf>,
    #[serde(default)]
    observations_k: Option<usize>,
    #[serde(default)]
    performance_path: Option<PathBuf>,
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    correlate_with: Option<CorrelateWith>,
    #[serde(default)]
    strict_assignment: Option<bool>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    tokenizer: Option<TokenizerConfig>,
    #[serde(default)]
    equal_variance: Option<bool>,
}

/// A validated configuration with defaults filled and paths absolute
/// (relative to the config file's directory).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub corpus_format: CorpusFormat,
    pub segmentation: Segmentation,
    pub master_seed: u64,
    pub test_fraction: f64,
    pub equalize: bool,
    pub drift_split: DriftSplit,
    pub metrics: Vec<MetricSpec>,
    pub embedding_paths: BTreeMap<String, PathBuf>,
    pub observations_k: usize,
    pub performance_path: Option<PathBuf>,
    /// Which dataset of the performance file to correlate; may be omitted
    /// when the file holds a single dataset.
    pub dataset: Option<String>,
    pub correlate_with: CorrelateWith,
    pub strict_assignment: bool,
    pub output_dir: PathBuf,
    pub tokenizer: TokenizerConfig,
    pub equal_variance: bool,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub drift_split: Option<DriftSplit>,
    pub correlate_with: Option<CorrelateWith>,
    pub strict: bool,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn require_file(field: impl Into<String>, path: &Path) -> Result<(), ConfigError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigError::MissingFile { field: field.into(), path: path.to_path_buf() })
    }
}

/// Parses config text; `base` anchors relative paths. Does not touch the
/// filesystem.
pub fn parse_config(text: &str, base: &Path, origin: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;

    let metrics = raw
        .metrics
        .iter()
        .map(|m| m.parse::<MetricSpec>().map_err(|_| ConfigError::UnknownMetric(m.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    if metrics.is_empty() {
        return Err(ConfigError::Invalid { field: "metrics", message: "at least one metric is required".into() });
    }
    for m in &metrics {
        if let Some(enc) = m.encoder_id() {
            if !raw.embedding_paths.contains_key(enc) {
                return Err(ConfigError::MissingEmbeddingPath { metric: m.to_string(), encoder: enc.to_string() });
            }
        }
    }

    let corpus_path = resolve(base, raw.corpus_path);
    let corpus_format = match raw.corpus_format {
        Some(f) => CorpusFormat::parse(&f),
        None => CorpusFormat::from_path(&corpus_path),
    }
    .map_err(|e| ConfigError::Invalid { field: "corpus_format", message: e.to_string() })?;

    let test_fraction = raw.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION);
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ConfigError::Invalid {
            field: "test_fraction",
            message: format!("must lie strictly between 0 and 1, got {test_fraction}"),
        });
    }
    let observations_k = raw.observations_k.unwrap_or(DEFAULT_OBSERVATIONS);
    if observations_k < 2 {
        return Err(ConfigError::Invalid { field: "observations_k", message: format!("must be at least 2, got {observations_k}") });
    }
    let tokenizer = raw.tokenizer.unwrap_or_default();
    tokenizer
        .validate()
        .map_err(|e| ConfigError::Invalid { field: "tokenizer", message: e.to_string() })?;

    Ok(RunConfig {
        corpus_path,
        corpus_format,
        segmentation: raw.segmentation,
        master_seed: raw.master_seed,
        test_fraction,
        equalize: raw.equalize.unwrap_or(true),
        drift_split: raw.drift_split.unwrap_or_default(),
        metrics,
        embedding_paths: raw.embedding_paths.into_iter().map(|(k, p)| (k, resolve(base, p))).collect(),
        observations_k,
        performance_path: raw.performance_path.map(|p| resolve(base, p)),
        dataset: raw.dataset,
        correlate_with: raw.correlate_with.unwrap_or_default(),
        strict_assignment: raw.strict_assignment.unwrap_or(false),
        output_dir: resolve(base, raw.output_dir.unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into())),
        tokenizer,
        equal_variance: raw.equal_variance.unwrap_or(false),
    })
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.master_seed {
            self.master_seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(split) = o.drift_split {
            self.drift_split = split;
        }
        if let Some(cw) = o.correlate_with {
            self.correlate_with = cw;
        }
        if o.strict {
            self.strict_assignment = true;
        }
    }

    /// Checks that every input file exists.
    pub fn check_files(&self) -> Result<(), ConfigError> {
        require_file("corpus_path", &self.corpus_path)?;
        for (enc, path) in &self.embedding_paths {
            require_file(format!("embedding_paths[{enc:?}]"), path)?;
        }
        if let Some(p) = &self.performance_path {
            require_file("performance_path", p)?;
        }
        Ok(())
    }

    pub fn embedding_encoders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.metrics.iter().filter_map(MetricSpec::encoder_id).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Reads, parses and validates a config file, applying overrides before
/// the input files are checked.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut config = parse_config(&text, base, path)?;
    config.apply(overrides);
    config.check_files()?;
    Ok(config)
}

pub fn validate_config(path: &Path) -> Result<RunConfig, ConfigError> {
    load_config(path, &Overrides::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::Measure;

    const MINIMAL: &str = r#"{
        "corpus_path": "corpus.jsonl",
        "segmentation": {"labels": {"A": 1, "B": 2}},
        "master_seed": 7,
        "metrics": ["jaccard"]
    }"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config(text, Path::new("/base"), Path::new("/base/config.json"))
    }

    #[test]
    fn minimal_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.observations_k, 15);
        assert_eq!(c.test_fraction, 0.2);
        assert!(c.equalize);
        assert_eq!(c.drift_split, DriftSplit::All);
        assert_eq!(c.correlate_with, CorrelateWith::OneShot);
        assert_eq!(c.corpus_format, CorpusFormat::Jsonl);
        assert_eq!(c.corpus_path, Path::new("/base/corpus.jsonl"));
        assert_eq!(c.output_dir, Path::new("/base/tempdrift_out"));
        assert_eq!(c.metrics, vec![MetricSpec::Jaccard]);
    }

    #[test]
    fn missing_field_is_named() {
        let err = parse(r#"{"corpus_path": "c.jsonl", "master_seed": 1, "metrics": []}"#).unwrap_err();
        assert!(err.to_string().contains("segmentation"), "{err}");
    }

    #[test]
    fn embedding_metric_needs_path() {
        let text = MINIMAL.replace(r#"["jaccard"]"#, r#"["embedding/enc1/cosine"]"#);
        assert!(matches!(parse(&text), Err(ConfigError::MissingEmbeddingPath { .. })));
        let with = text.replace(r#""master_seed": 7"#, r#""master_seed": 7, "embedding_paths": {"enc1": "v.tdeb"}"#);
        let c = parse(&with).unwrap();
        assert_eq!(c.metrics, vec![MetricSpec::embedding("enc1", Measure::Cosine)]);
        assert_eq!(c.embedding_paths["enc1"], Path::new("/base/v.tdeb"));
    }

    #[test]
    fn unknown_family() {
        let text = MINIMAL.replace(r#"["jaccard"]"#, r#"["kl_divergence"]"#);
        assert!(matches!(parse(&text), Err(ConfigError::UnknownMetric(m)) if m == "kl_divergence"));
    }

    #[test]
    fn invalid_values() {
        let k = MINIMAL.replace(r#""master_seed": 7"#, r#""master_seed": 7, "observations_k": 1"#);
        assert!(matches!(parse(&k), Err(ConfigError::Invalid { field: "observations_k", .. })));
        let f = MINIMAL.replace(r#""master_seed": 7"#, r#""master_seed": 7, "test_fraction": 1.0"#);
        assert!(matches!(parse(&f), Err(ConfigError::Invalid { field: "test_fraction", .. })));
        let u = MINIMAL.replace(r#""master_seed": 7"#, r#""master_seed": 7, "colour": "blue""#);
        assert!(matches!(parse(&u), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn overrides_take_precedence() {
        let text = MINIMAL.replace(r#""master_seed": 7"#, r#""master_seed": 7, "correlate_with": "obs_mean""#);
        let mut c = parse(&text).unwrap();
        assert_eq!(c.correlate_with, CorrelateWith::ObsMean);
        c.apply(&Overrides {
            master_seed: Some(99),
            correlate_with: Some(CorrelateWith::OneShot),
            drift_split: Some(DriftSplit::Train),
            strict: true,
            ..Overrides::default()
        });
        assert_eq!(c.master_seed, 99);
        assert_eq!(c.correlate_with, CorrelateWith::OneShot);
        assert_eq!(c.drift_split, DriftSplit::Train);
        assert!(c.strict_assignment);
    }

    #[test]
    fn missing_input_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, MINIMAL).unwrap();
        assert!(matches!(validate_config(&path), Err(ConfigError::MissingFile { .. })));
        std::fs::write(dir.path().join("corpus.jsonl"), "").unwrap();
        assert!(validate_config(&path).is_ok());
    }

    #[test]
    fn text_enums() {
        assert_eq!("obs_mean".parse::<CorrelateWith>().unwrap(), CorrelateWith::ObsMean);
        assert_eq!(DriftSplit::Train.to_string(), "train");
        assert!("both".parse::<DriftSplit>().is_err());
    }
}
