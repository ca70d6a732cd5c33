//! End-to-end run: ingest, segment, drift, perf, correlate, report.
//!
//! Each stage reads its inputs from the config and from files earlier stages
//! left in the output directory, so stages can be run one at a time or
//! swapped for external tooling. Output layout:
//!
//! ```text
//! ingest.json
//! segments.json                 segmentation before equalization, with skips
//! domains.json                  equalized domains in ordinal order
//! manifests/<label>.json
//! drift/one_shot.csv            full-domain values, i <= j
//! drift/observations.csv
//! drift/significance.csv        ordered pairs i != j
//! drift/obs_mean.csv            observation means, diagonal = in-domain
//! perf/ledger.csv               canonical copy of the performance file
//! perf/changes.csv
//! perf/run_deltas.csv
//! correlation/correlations.csv
//! report/...
//! run_summary.json              seed, hashes, timestamps, file inventory
//! ```
//!
//! Everything except `run_summary.json` is a pure function of the config,
//! the input files and the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{self, ConfigError, CorrelateWith, DriftSplit, Overrides, RunConfig};
use crate::corpus::{self, Corpus, CorpusError, SplitManifest, TemporalDomain};
use crate::correlation::{self, CorrelationCell, CorrelationError, CorrelationGrid};
use crate::drift::{self, DocSet, DriftError, DriftMeasurement, MetricSpec};
use crate::embedding::{self, EmbeddingError, EmbeddingTable};
use crate::observe::{self, MeasureEnv, ObservationError, ObservationMode, ObservationSet};
use crate::perf::{self, PerfError, PerformanceChange};
use crate::report::{self, MatrixView, ReportError, ValueKind};
use crate::stats::TestResult;

pub const SUMMARY_FILE: &str = "run_summary.json";
pub const PARTIAL_MARKER: &str = ".partial";

// ============================================================================
// Errors
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numeric => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: &'static str,
    pub category: Category,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }
}

type StageResult<T> = Result<T, (Category, String)>;

trait Categorize: fmt::Display {
    fn category(&self) -> Category;

    fn tagged(self) -> (Category, String)
    where
        Self: Sized,
    {
        (self.category(), self.to_string())
    }
}

impl Categorize for ConfigError {
    fn category(&self) -> Category {
        Category::Config
    }
}

impl Categorize for CorpusError {
    fn category(&self) -> Category {
        match self {
            CorpusError::Segmentation(_) | CorpusError::OverlappingRanges { .. } | CorpusError::BadFraction(_) => {
                Category::Config
            }
            _ => Category::Data,
        }
    }
}

impl Categorize for EmbeddingError {
    fn category(&self) -> Category {
        Category::Data
    }
}

impl Categorize for DriftError {
    fn category(&self) -> Category {
        match self {
            DriftError::EmptySets
            | DriftError::EmptyCollection(_)
            | DriftError::ZeroVector(_)
            | DriftError::LengthMismatch(..) => Category::Numeric,
            DriftError::MissingEmbedding(_) => Category::Data,
            DriftError::MissingTable(_)
            | DriftError::EncoderMismatch { .. }
            | DriftError::UnknownMetric(_)
            | DriftError::Lexical(_) => Category::Config,
        }
    }
}

impl Categorize for ObservationError {
    fn category(&self) -> Category {
        match self {
            ObservationError::Metric { error, .. } => error.category(),
            ObservationError::TooFewObservations(_) => Category::Config,
            ObservationError::Stats(_) => Category::Numeric,
            _ => Category::Data,
        }
    }
}

impl Categorize for PerfError {
    fn category(&self) -> Category {
        if self.is_numeric() {
            Category::Numeric
        } else {
            Category::Data
        }
    }
}

impl Categorize for CorrelationError {
    fn category(&self) -> Category {
        match self {
            CorrelationError::Stats { .. } => Category::Numeric,
            CorrelationError::MultipleDatasets(_) | CorrelationError::NoMetrics => Category::Config,
            _ => Category::Data,
        }
    }
}

impl Categorize for ReportError {
    fn category(&self) -> Category {
        match self {
            ReportError::NonFinite { .. } => Category::Numeric,
            _ => Category::Data,
        }
    }
}

fn data_err(message: impl Into<String>) -> (Category, String) {
    (Category::Data, message.into())
}

// ============================================================================
// Stages
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Segment,
    Drift,
    Perf,
    Correlate,
    Report,
    All,
}

impl Stage {
    pub const SEQUENCE: [Stage; 6] = [Stage::Ingest, Stage::Segment, Stage::Drift, Stage::Perf, Stage::Correlate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Drift => "drift",
            Stage::Perf => "perf",
            Stage::Correlate => "correlate",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ============================================================================
// CSV rows
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DriftRow {
    source: String,
    target: String,
    metric: MetricSpec,
    kind: String,
    value: f64,
}

impl DriftRow {
    fn new(source: &str, target: &str, metric: &MetricSpec, value: f64) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            metric: metric.clone(),
            kind: metric.kind().as_str().into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObservationRow {
    source: String,
    target: String,
    metric: MetricSpec,
    mode: ObservationMode,
    obs_index: usize,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SignificanceRow {
    source: String,
    target: String,
    metric: MetricSpec,
    t: f64,
    df: f64,
    p: f64,
    significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChangeRow {
    dataset: String,
    perf_metric: String,
    source: String,
    target: String,
    delta: f64,
    t: f64,
    df: f64,
    p: f64,
    significant: bool,
    zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunDeltaRow {
    dataset: String,
    perf_metric: String,
    source: String,
    target: String,
    run_index: usize,
    delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorrelationRow {
    drift_family: String,
    encoder_id: String,
    measure: String,
    perf_metric: String,
    r: f64,
    p: f64,
    n: usize,
    stars: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestInfo {
    documents: usize,
    format: corpus::CorpusFormat,
    corpus_sha256: String,
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).expect("in-memory write");
    }
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn from_csv<T: DeserializeOwned>(path: &Path) -> StageResult<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| missing_input(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn missing_input(path: &Path, e: impl fmt::Display) -> (Category, String) {
    data_err(format!("cannot read {} (has the earlier stage run?): {e}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> StageResult<T> {
    let text = fs::read_to_string(path).map_err(|e| missing_input(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> StageResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| data_err(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ============================================================================
// Run summary
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stage: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub config_sha256: String,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub warnings: Vec<String>,
    pub files: Vec<FileEntry>,
}

/// Every file under `dir` except the summary and the partial marker, with
/// `/`-separated relative paths in sorted order.
pub fn inventory(dir: &Path) -> std::io::Result<Vec<FileEntry>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel: Vec<String> = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let rel = rel.join("/");
            if rel == SUMMARY_FILE || rel == PARTIAL_MARKER {
                continue;
            }
            let bytes = fs::read(&path)?;
            out.push(FileEntry { path: rel, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

// ============================================================================
// Pipeline
// ============================================================================

pub struct Pipeline {
    config: RunConfig,
    config_sha256: String,
    threads: Option<usize>,
}

/// Domains with their documents resolved, ready for measurement.
struct Loaded {
    corpus: Corpus,
    domains: Vec<TemporalDomain>,
    tables: BTreeMap<String, EmbeddingTable>,
}

impl Pipeline {
    pub fn new(config: RunConfig, config_bytes: &[u8]) -> Self {
        Self { config, config_sha256: sha256_hex(config_bytes), threads: None }
    }

    /// Loads and validates `path`, applying `overrides`.
    pub fn from_config_file(path: &Path, overrides: &Overrides) -> Result<Self, PipelineError> {
        let bytes = fs::read(path).map_err(|e| PipelineError {
            stage: "config",
            category: Category::Config,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let config = config::load_config(path, overrides).map_err(|e| PipelineError {
            stage: "config",
            category: e.category(),
            message: e.to_string(),
        })?;
        Ok(Self::new(config, &bytes))
    }

    /// Caps the worker threads; `None` uses rayon's default.
    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.config.output_dir.join(rel)
    }

    /// Runs one stage (or all of them) and writes `run_summary.json`. On
    /// failure the output directory keeps a `.partial` marker holding the
    /// error message.
    pub fn run(&self, stage: Stage) -> Result<RunSummary, PipelineError> {
        let started = chrono::Utc::now().to_rfc3339();
        let dir = &self.config.output_dir;
        let fail = |stage: &'static str, (category, message): (Category, String)| PipelineError { stage, category, message };
        fs::create_dir_all(dir)
            .map_err(|e| fail(stage.as_str(), data_err(format!("cannot create {}: {e}", dir.display()))))?;
        let marker = dir.join(PARTIAL_MARKER);
        write_file(&marker, format!("{stage} started\n")).map_err(|e| fail(stage.as_str(), e))?;

        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| fail(stage.as_str(), (Category::Config, format!("thread pool: {e}"))))?;
        let threads = pool.current_num_threads();

        let stages: Vec<Stage> = if stage == Stage::All { Stage::SEQUENCE.to_vec() } else { vec![stage] };
        let mut warnings = Vec::new();
        for s in stages {
            log::info!("stage {s}");
            let result = pool.install(|| self.run_stage(s, &mut warnings));
            if let Err(e) = result {
                let err = fail(s.as_str(), e);
                let _ = fs::write(&marker, format!("{err}\n"));
                return Err(err);
            }
        }

        let files = inventory(dir).map_err(|e| fail(stage.as_str(), data_err(format!("inventory: {e}"))))?;
        let summary = RunSummary {
            stage: stage.as_str().into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            master_seed: self.config.master_seed,
            config_sha256: self.config_sha256.clone(),
            threads,
            started,
            finished: chrono::Utc::now().to_rfc3339(),
            warnings,
            files,
        };
        write_file(&dir.join(SUMMARY_FILE), json_string(&summary)).map_err(|e| fail(stage.as_str(), e))?;
        fs::remove_file(&marker).map_err(|e| fail(stage.as_str(), data_err(format!("cannot remove marker: {e}"))))?;
        Ok(summary)
    }

    fn run_stage(&self, stage: Stage, warnings: &mut Vec<String>) -> StageResult<()> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Segment => self.segment(warnings),
            Stage::Drift => self.drift(),
            Stage::Perf => self.perf(warnings),
            Stage::Correlate => self.correlate(),
            Stage::Report => self.report(),
            Stage::All => unreachable!("expanded by run"),
        }
    }

    fn load_corpus(&self) -> StageResult<Corpus> {
        corpus::load_corpus(&self.config.corpus_path, self.config.corpus_format).map_err(Categorize::tagged)
    }

    // ------------------------------------------------------------------------

    fn ingest(&self) -> StageResult<()> {
        let bytes = fs::read(&self.config.corpus_path)
            .map_err(|e| data_err(format!("cannot read {}: {e}", self.config.corpus_path.display())))?;
        let corpus = self.load_corpus()?;
        let info = IngestInfo {
            documents: corpus.len(),
            format: self.config.corpus_format,
            corpus_sha256: sha256_hex(&bytes),
        };
        write_file(&self.out("ingest.json"), json_string(&info))
    }

    fn segment(&self, warnings: &mut Vec<String>) -> StageResult<()> {
        let corpus = self.load_corpus()?;
        let segmented = corpus::segment_domains(&corpus, &self.config.segmentation, self.config.strict_assignment)
            .map_err(Categorize::tagged)?;
        if !segmented.skipped.is_empty() {
            let msg = format!("{} documents matched no domain and were skipped", segmented.skipped.len());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        write_file(&self.out("segments.json"), json_string(&segmented))?;

        let domains = if self.config.equalize {
            corpus::equalize_domains(&segmented.domains, self.config.master_seed)
        } else {
            segmented.domains
        };
        write_file(&self.out("domains.json"), json_string(&domains))?;

        let manifest_dir = self.out("manifests");
        if manifest_dir.exists() {
            fs::remove_dir_all(&manifest_dir).map_err(|e| data_err(format!("cannot clear {}: {e}", manifest_dir.display())))?;
        }
        for d in &domains {
            let m = corpus::split_train_test(d, self.config.test_fraction, self.config.master_seed)
                .map_err(Categorize::tagged)?;
            write_file(&manifest_dir.join(format!("{}.json", report::file_stem(&d.label))), m.to_json())?;
        }
        Ok(())
    }

    fn domains(&self) -> StageResult<Vec<TemporalDomain>> {
        read_json(&self.out("domains.json"))
    }

    fn measured_domains(&self) -> StageResult<Vec<TemporalDomain>> {
        let domains = self.domains()?;
        if self.config.drift_split == DriftSplit::All {
            return Ok(domains);
        }
        domains
            .into_iter()
            .map(|d| {
                let path = self.out(&format!("manifests/{}.json", report::file_stem(&d.label)));
                let m: SplitManifest = read_json(&path)?;
                let train: BTreeSet<&String> = m.train_ids.iter().collect();
                let doc_ids = d.doc_ids.iter().filter(|id| train.contains(id)).cloned().collect();
                Ok(TemporalDomain { doc_ids, ..d })
            })
            .collect()
    }

    fn load_inputs(&self) -> StageResult<Loaded> {
        let corpus = self.load_corpus()?;
        let domains = self.measured_domains()?;
        let mut tables = BTreeMap::new();
        for enc in self.config.embedding_encoders() {
            let path = &self.config.embedding_paths[enc];
            let table = embedding::load_embedding_table_as(path, enc).map_err(Categorize::tagged)?;
            tables.insert(enc.to_string(), table);
        }
        Ok(Loaded { corpus, domains, tables })
    }

    fn drift(&self) -> StageResult<()> {
        let Loaded { corpus, domains, tables } = self.load_inputs()?;
        let env = MeasureEnv { corpus: &corpus, embeddings: &tables, tokenizer: &self.config.tokenizer };
        let metrics = &self.config.metrics;
        let (seed, k) = (self.config.master_seed, self.config.observations_k);
        let kd = domains.len();

        // Full-domain values for every unordered pair, diagonal included.
        let pairs: Vec<(&MetricSpec, usize, usize)> = metrics
            .iter()
            .flat_map(|m| (0..kd).flat_map(move |i| (i..kd).map(move |j| (m, i, j))))
            .collect();
        let one_shot: Vec<DriftRow> = pairs
            .par_iter()
            .map(|&(m, i, j)| {
                let (a, b) = (&domains[i], &domains[j]);
                let docs_a = env.resolve(&a.label, &a.doc_ids).map_err(Categorize::tagged)?;
                let docs_b = env.resolve(&b.label, &b.doc_ids).map_err(Categorize::tagged)?;
                let v = drift::measure_value(
                    DocSet::new(&a.label, &docs_a),
                    DocSet::new(&b.label, &docs_b),
                    m,
                    env.table_for(m),
                    env.tokenizer,
                )
                .map_err(|e| (e.category(), format!("{m} between {} and {}: {e}", a.label, b.label)))?;
                Ok(DriftRow::new(&a.label, &b.label, m, v))
            })
            .collect::<Vec<StageResult<_>>>()
            .into_iter()
            .collect::<StageResult<_>>()?;

        // Observation sets: in-domain for each j, cross for each ordered i != j.
        let jobs: Vec<(&MetricSpec, usize, usize)> = metrics
            .iter()
            .flat_map(|m| (0..kd).flat_map(move |i| (0..kd).map(move |j| (m, i, j))))
            .collect();
        let sets: Vec<ObservationSet> = jobs
            .par_iter()
            .map(|&(m, i, j)| {
                if i == j {
                    observe::in_domain_observations(&domains[j], m, k, seed, &env)
                } else {
                    observe::cross_domain_observations(&domains[i], &domains[j], m, k, seed, &env)
                }
                .map_err(Categorize::tagged)
            })
            .collect::<Vec<StageResult<_>>>()
            .into_iter()
            .collect::<StageResult<_>>()?;

        let mut obs_rows = Vec::new();
        let mut mean_rows = Vec::new();
        let mut sig_rows = Vec::new();
        for (set, &(m, i, j)) in sets.iter().zip(&jobs) {
            for (n, &value) in set.values.iter().enumerate() {
                obs_rows.push(ObservationRow {
                    source: set.source_label.clone(),
                    target: set.target_label.clone(),
                    metric: m.clone(),
                    mode: set.mode,
                    obs_index: n + 1,
                    value,
                });
            }
            mean_rows.push(DriftRow::new(&set.source_label, &set.target_label, m, set.mean()));
            if i != j {
                let indom = &sets[jobs.iter().position(|&(m2, a, b)| m2 == m && a == j && b == j).expect("in-domain job")];
                let test = observe::drift_significance_with(set, indom, self.config.equal_variance)
                    .map_err(|e| (e.category(), format!("{m} significance for {} vs {}: {e}", set.source_label, set.target_label)))?;
                sig_rows.push(SignificanceRow {
                    source: set.source_label.clone(),
                    target: set.target_label.clone(),
                    metric: m.clone(),
                    t: test.statistic,
                    df: test.df,
                    p: test.p_value,
                    significant: test.significant,
                });
            }
        }

        let drift_header = ["source", "target", "metric", "kind", "value"];
        write_file(&self.out("drift/one_shot.csv"), to_csv(&one_shot, &drift_header))?;
        write_file(&self.out("drift/obs_mean.csv"), to_csv(&mean_rows, &drift_header))?;
        write_file(
            &self.out("drift/observations.csv"),
            to_csv(&obs_rows, &["source", "target", "metric", "mode", "obs_index", "value"]),
        )?;
        write_file(
            &self.out("drift/significance.csv"),
            to_csv(&sig_rows, &["source", "target", "metric", "t", "df", "p", "significant"]),
        )
    }

    fn perf(&self, warnings: &mut Vec<String>) -> StageResult<()> {
        let Some(path) = &self.config.performance_path else {
            log::info!("no performance_path, skipping perf");
            return Ok(());
        };
        let (ledger, w) = perf::load_performance(path, self.config.strict_assignment).map_err(Categorize::tagged)?;
        for msg in &w {
            log::warn!("{msg}");
        }
        warnings.extend(w);

        let mut changes = Vec::new();
        let mut run_deltas = Vec::new();
        for key in ledger.cells().filter(|k| k.train_domain != k.test_domain) {
            let (ds, pm, i, j) = (&key.dataset, &key.perf_metric, &key.train_domain, &key.test_domain);
            let change = perf::performance_change(&ledger, ds, pm, i, j).map_err(Categorize::tagged)?;
            let test = perf::change_significance_with(&ledger, ds, pm, i, j, self.config.equal_variance)
                .map_err(Categorize::tagged)?;
            for (r, &delta) in change.run_deltas.iter().enumerate() {
                run_deltas.push(RunDeltaRow {
                    dataset: ds.clone(),
                    perf_metric: pm.clone(),
                    source: i.clone(),
                    target: j.clone(),
                    run_index: r + 1,
                    delta,
                });
            }
            changes.push(ChangeRow {
                dataset: ds.clone(),
                perf_metric: pm.clone(),
                source: i.clone(),
                target: j.clone(),
                delta: change.delta,
                t: test.statistic,
                df: test.df,
                p: test.p_value,
                significant: test.significant,
                zero_variance: test.zero_variance,
            });
        }
        write_file(&self.out("perf/ledger.csv"), ledger.to_csv())?;
        write_file(
            &self.out("perf/changes.csv"),
            to_csv(&changes, &["dataset", "perf_metric", "source", "target", "delta", "t", "df", "p", "significant", "zero_variance"]),
        )?;
        write_file(
            &self.out("perf/run_deltas.csv"),
            to_csv(&run_deltas, &["dataset", "perf_metric", "source", "target", "run_index", "delta"]),
        )
    }

    fn read_changes(&self) -> StageResult<Vec<ChangeRow>> {
        from_csv(&self.out("perf/changes.csv"))
    }

    /// The dataset to correlate: the configured one, or the only one present.
    fn select_dataset(&self, rows: &[ChangeRow]) -> StageResult<String> {
        let present: BTreeSet<&str> = rows.iter().map(|r| r.dataset.as_str()).collect();
        match &self.config.dataset {
            Some(ds) if present.contains(ds.as_str()) => Ok(ds.clone()),
            Some(ds) => Err((Category::Config, format!("dataset {ds:?} not in performance file"))),
            None if present.len() == 1 => Ok(present.into_iter().next().expect("one dataset").to_string()),
            None if present.is_empty() => Err(data_err("performance file has no cross-domain cells")),
            None => Err((
                Category::Config,
                format!(
                    "performance file holds several datasets ({}); set \"dataset\" in the config",
                    present.into_iter().collect::<Vec<_>>().join(", ")
                ),
            )),
        }
    }

    /// Drift values used for correlation, one per unordered pair.
    fn correlation_drift(&self) -> StageResult<Vec<DriftMeasurement>> {
        let to_measurement = |r: DriftRow| DriftMeasurement {
            source_label: r.source,
            target_label: r.target,
            metric: r.metric,
            value: r.value,
        };
        match self.config.correlate_with {
            CorrelateWith::OneShot => {
                Ok(from_csv::<DriftRow>(&self.out("drift/one_shot.csv"))?.into_iter().map(to_measurement).collect())
            }
            CorrelateWith::ObsMean => {
                // The two directions of a pair are separate observation sets;
                // their means are averaged to get one symmetric value.
                let rows: Vec<DriftRow> = from_csv(&self.out("drift/obs_mean.csv"))?;
                let mut by_pair: BTreeMap<(MetricSpec, String, String), f64> = BTreeMap::new();
                for r in &rows {
                    by_pair.insert((r.metric.clone(), r.source.clone(), r.target.clone()), r.value);
                }
                let mut out = Vec::new();
                for r in rows.into_iter().filter(|r| r.source < r.target) {
                    let back = by_pair
                        .get(&(r.metric.clone(), r.target.clone(), r.source.clone()))
                        .ok_or_else(|| data_err(format!("obs_mean.csv lacks {} for ({}, {})", r.metric, r.target, r.source)))?;
                    let value = (r.value + back) / 2.0;
                    out.push(to_measurement(DriftRow { value, ..r }));
                }
                Ok(out)
            }
        }
    }

    fn correlate(&self) -> StageResult<()> {
        if self.config.performance_path.is_none() {
            log::info!("no performance_path, skipping correlate");
            return Ok(());
        }
        let rows = self.read_changes()?;
        let dataset = self.select_dataset(&rows)?;
        let changes: Vec<PerformanceChange> = rows
            .into_iter()
            .filter(|r| r.dataset == dataset)
            .map(|r| PerformanceChange {
                dataset: r.dataset,
                perf_metric: r.perf_metric,
                source_label: r.source,
                target_label: r.target,
                delta: r.delta,
                run_deltas: Vec::new(),
            })
            .collect();
        let drift = self.correlation_drift()?;
        let grid = correlation::build_correlation_table(&drift, &changes, &self.config.metrics)
            .map_err(Categorize::tagged)?;
        write_file(&self.out("correlation/correlations.csv"), report::correlation_csv(&grid))
    }

    fn read_grid(&self) -> StageResult<CorrelationGrid> {
        let rows: Vec<CorrelationRow> = from_csv(&self.out("correlation/correlations.csv"))?;
        let mut grid = CorrelationGrid { rows: Vec::new(), columns: Vec::new(), cells: Vec::new() };
        for r in rows {
            let metric = MetricSpec::from_columns(&r.drift_family, &r.encoder_id, &r.measure)
                .map_err(|e| data_err(format!("correlations.csv: {e}")))?;
            if !grid.rows.contains(&metric) {
                grid.rows.push(metric.clone());
            }
            if !grid.columns.contains(&r.perf_metric) {
                grid.columns.push(r.perf_metric.clone());
            }
            grid.cells.push(CorrelationCell {
                drift_metric: metric,
                perf_metric: r.perf_metric,
                r: r.r,
                p_value: r.p,
                n: r.n,
                stars: correlation::stars(r.p),
            });
        }
        if grid.cells.len() != grid.rows.len() * grid.columns.len() {
            return Err(data_err("correlations.csv is not a complete grid"));
        }
        Ok(grid)
    }

    fn write_matrix(&self, stem: &str, view: &MatrixView) -> StageResult<()> {
        let svg = report::render_heatmap_svg(view).map_err(|e| (e.category(), format!("{stem}: {e}")))?;
        write_file(&self.out(&format!("report/heatmap_{stem}.svg")), svg)?;
        let csv = report::matrix_csv(view).map_err(Categorize::tagged)?;
        write_file(&self.out(&format!("report/matrix_{stem}.csv")), csv)?;
        if let Some(mask) = report::mask_csv(view).map_err(Categorize::tagged)? {
            write_file(&self.out(&format!("report/matrix_{stem}_mask.csv")), mask)?;
        }
        Ok(())
    }

    fn report(&self) -> StageResult<()> {
        let domains = self.domains()?;
        let labels: Vec<String> = domains.iter().map(|d| d.label.clone()).collect();
        let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let kd = labels.len();
        let pos = |label: &str| index.get(label).copied().ok_or_else(|| data_err(format!("unknown domain {label:?}")));

        let report_dir = self.out("report");
        if report_dir.exists() {
            fs::remove_dir_all(&report_dir).map_err(|e| data_err(format!("cannot clear {}: {e}", report_dir.display())))?;
        }

        let (source_file, suffix) = match self.config.correlate_with {
            CorrelateWith::OneShot => ("drift/one_shot.csv", "full domains"),
            CorrelateWith::ObsMean => ("drift/obs_mean.csv", "observation mean"),
        };
        let drift_rows: Vec<DriftRow> = from_csv(&self.out(source_file))?;
        let sig_rows: Vec<SignificanceRow> = from_csv(&self.out("drift/significance.csv"))?;
        for m in correlation::table_order(&self.config.metrics) {
            let mut values = vec![vec![f64::NAN; kd]; kd];
            for r in drift_rows.iter().filter(|r| r.metric == m) {
                let (i, j) = (pos(&r.source)?, pos(&r.target)?);
                values[i][j] = r.value;
                if self.config.correlate_with == CorrelateWith::OneShot {
                    values[j][i] = r.value;
                }
            }
            let mut mask = vec![vec![false; kd]; kd];
            for r in sig_rows.iter().filter(|r| r.metric == m) {
                mask[pos(&r.source)?][pos(&r.target)?] = r.significant;
            }
            let view = MatrixView {
                title: format!("{}, {suffix}", m.display_name()),
                row_labels: labels.clone(),
                col_labels: labels.clone(),
                values,
                value_kind: m.kind().into(),
                mask: Some(mask),
            };
            self.write_matrix(&m.slug(), &view)?;
        }

        if self.config.performance_path.is_none() {
            return Ok(());
        }
        let rows = self.read_changes()?;
        let dataset = self.select_dataset(&rows)?;
        let mut by_metric: BTreeMap<String, Vec<(PerformanceChange, TestResult)>> = BTreeMap::new();
        let run_rows: Vec<RunDeltaRow> = from_csv(&self.out("perf/run_deltas.csv"))?;
        for r in rows.into_iter().filter(|r| r.dataset == dataset) {
            let run_deltas = run_rows
                .iter()
                .filter(|d| d.dataset == r.dataset && d.perf_metric == r.perf_metric && d.source == r.source && d.target == r.target)
                .map(|d| d.delta)
                .collect();
            let change = PerformanceChange {
                dataset: r.dataset,
                perf_metric: r.perf_metric.clone(),
                source_label: r.source,
                target_label: r.target,
                delta: r.delta,
                run_deltas,
            };
            let test = TestResult {
                statistic: r.t,
                df: r.df,
                p_value: r.p,
                significant: r.significant,
                zero_variance: r.zero_variance,
            };
            by_metric.entry(r.perf_metric).or_default().push((change, test));
        }
        for (perf_metric, changes) in &by_metric {
            let stem = report::file_stem(perf_metric);
            write_file(&self.out(&format!("report/deltas_{stem}.csv")), report::deltas_csv(changes))?;
            let mut values = vec![vec![0.0; kd]; kd];
            let mut mask = vec![vec![false; kd]; kd];
            for (c, t) in changes {
                let (i, j) = (pos(&c.source_label)?, pos(&c.target_label)?);
                values[i][j] = c.delta;
                mask[i][j] = t.significant;
            }
            let view = MatrixView {
                title: format!("{perf_metric} change, {dataset}"),
                row_labels: labels.clone(),
                col_labels: labels.clone(),
                values,
                value_kind: ValueKind::Delta,
                mask: Some(mask),
            };
            self.write_matrix(&format!("delta_{stem}"), &view)?;
        }

        let grid = self.read_grid()?;
        let md = report::render_correlation_markdown(&grid).map_err(Categorize::tagged)?;
        write_file(&self.out("report/correlations.md"), md)?;
        write_file(&self.out("report/correlations.csv"), report::correlation_csv(&grid))
    }
}

/// Convenience wrapper: load `config_path`, apply overrides and run `stage`.
pub fn run_pipeline(
    config_path: &Path,
    overrides: &Overrides,
    stage: Stage,
    threads: Option<usize>,
) -> Result<RunSummary, PipelineError> {
    Pipeline::from_config_file(config_path, overrides)?.with_threads(threads).run(stage)
}
