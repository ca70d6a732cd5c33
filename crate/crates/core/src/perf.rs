//! Externally produced model scores and the performance changes derived from them.
//!
//! A cell `(dataset, perf_metric, i, j)` holds the scores of every run trained
//! on domain `i` and tested on domain `j`. The change for `i != j` is
//! `mean(p_ij) - mean(p_jj)`, so a negative delta is a degradation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{self, StatsError, TestResult};

pub const HEADER: [&str; 6] = ["dataset", "perf_metric", "train_domain", "test_domain", "run_index", "score"];

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("duplicate record {key} run {run}")]
    DuplicateKey { key: CellKey, run: u32 },
    #[error("cell {key} has no in-domain cell ({target}, {target})", target = key.test_domain)]
    MissingInDomain { key: CellKey },
    #[error("unequal run counts: {key} has {found}, {other} has {expected}")]
    UnequalRuns { key: String, found: usize, other: String, expected: usize },
    #[error("no cell {0}")]
    MissingCell(CellKey),
    #[error("performance change needs two different domains, got {0} twice")]
    SameDomain(String),
    #[error("{key}: {source}")]
    Stats { key: CellKey, source: StatsError },
}

impl PerfError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, PerfError::Stats { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub dataset: String,
    pub perf_metric: String,
    pub train_domain: String,
    pub test_domain: String,
    pub run_index: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub perf_metric: String,
    pub train_domain: String,
    pub test_domain: String,
}

impl CellKey {
    pub fn new(dataset: &str, perf_metric: &str, train: &str, test: &str) -> Self {
        Self {
            dataset: dataset.into(),
            perf_metric: perf_metric.into(),
            train_domain: train.into(),
            test_domain: test.into(),
        }
    }

    fn in_domain(&self) -> Self {
        Self { train_domain: self.test_domain.clone(), ..self.clone() }
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} ({}, {})", self.dataset, self.perf_metric, self.train_domain, self.test_domain)
    }
}

/// Scores grouped by cell; runs kept in `run_index` order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceLedger {
    cells: BTreeMap<CellKey, BTreeMap<u32, f64>>,
}

impl PerformanceLedger {
    pub fn from_records(records: impl IntoIterator<Item = PerformanceRecord>) -> Result<Self, PerfError> {
        let mut ledger = Self::default();
        for r in records {
            ledger.insert(r)?;
        }
        Ok(ledger)
    }

    pub fn insert(&mut self, r: PerformanceRecord) -> Result<(), PerfError> {
        let key = CellKey::new(&r.dataset, &r.perf_metric, &r.train_domain, &r.test_domain);
        let runs = self.cells.entry(key.clone()).or_default();
        if runs.insert(r.run_index, r.score).is_some() {
            return Err(PerfError::DuplicateKey { key, run: r.run_index });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellKey> {
        self.cells.keys()
    }

    pub fn runs(&self, key: &CellKey) -> Option<Vec<f64>> {
        self.cells.get(key).map(|runs| runs.values().copied().collect())
    }

    fn require(&self, key: &CellKey) -> Result<Vec<f64>, PerfError> {
        self.runs(key).ok_or_else(|| PerfError::MissingCell(key.clone()))
    }

    pub fn datasets(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|k| k.dataset.as_str()).collect()
    }

    pub fn perf_metrics(&self, dataset: &str) -> BTreeSet<&str> {
        self.cells
            .keys()
            .filter(|k| k.dataset == dataset)
            .map(|k| k.perf_metric.as_str())
            .collect()
    }

    /// Cross-domain cells of one dataset and metric, in key order.
    pub fn cross_cells<'a>(&'a self, dataset: &'a str, perf_metric: &'a str) -> impl Iterator<Item = &'a CellKey> + 'a {
        self.cells.keys().filter(move |k| {
            k.dataset == dataset && k.perf_metric == perf_metric && k.train_domain != k.test_domain
        })
    }

    /// Checks that every cross cell has its in-domain cell and that compared
    /// cells have equal run counts. Unequal counts are returned as warnings
    /// unless `strict` is set.
    pub fn validate(&self, strict: bool) -> Result<Vec<String>, PerfError> {
        let mut warnings = Vec::new();
        for (key, runs) in &self.cells {
            if key.train_domain == key.test_domain {
                continue;
            }
            let other = key.in_domain();
            let base = self.cells.get(&other).ok_or_else(|| PerfError::MissingInDomain { key: key.clone() })?;
            if runs.len() != base.len() {
                let err = PerfError::UnequalRuns {
                    key: key.to_string(),
                    found: runs.len(),
                    other: other.to_string(),
                    expected: base.len(),
                };
                if strict {
                    return Err(err);
                }
                warnings.push(err.to_string());
            }
        }
        Ok(warnings)
    }

    pub fn records(&self) -> impl Iterator<Item = PerformanceRecord> + '_ {
        self.cells.iter().flat_map(|(k, runs)| {
            runs.iter().map(move |(&run_index, &score)| PerformanceRecord {
                dataset: k.dataset.clone(),
                perf_metric: k.perf_metric.clone(),
                train_domain: k.train_domain.clone(),
                test_domain: k.test_domain.clone(),
                run_index,
                score,
            })
        })
    }

    /// Canonical CSV: sorted by cell key then run index.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in self.records() {
            w.write_record([
                r.dataset,
                r.perf_metric,
                r.train_domain,
                r.test_domain,
                r.run_index.to_string(),
                r.score.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

pub fn parse_performance(path: &Path, text: &str) -> Result<PerformanceLedger, PerfError> {
    let malformed = |line: u64, message: String| PerfError::Malformed { path: path.to_path_buf(), line, message };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if headers.iter().ne(HEADER) {
        return Err(malformed(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut ledger = PerformanceLedger::default();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(malformed(line, e.to_string()));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        let r: PerformanceRecord = record.deserialize(Some(&headers)).map_err(|e| malformed(line, e.to_string()))?;
        if !r.score.is_finite() {
            return Err(malformed(line, format!("non-finite score {}", r.score)));
        }
        if r.run_index == 0 {
            return Err(malformed(line, "run_index starts at 1".into()));
        }
        if [&r.dataset, &r.perf_metric, &r.train_domain, &r.test_domain].iter().any(|s| s.is_empty()) {
            return Err(malformed(line, "empty key field".into()));
        }
        ledger.insert(r)?;
    }
    Ok(ledger)
}

/// Loads and validates a performance CSV; returns the ledger and any warnings.
pub fn load_performance(path: &Path, strict: bool) -> Result<(PerformanceLedger, Vec<String>), PerfError> {
    let text = std::fs::read_to_string(path).map_err(|source| PerfError::Io { path: path.to_path_buf(), source })?;
    let ledger = parse_performance(path, &text)?;
    let warnings = ledger.validate(strict)?;
    Ok((ledger, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceChange {
    pub dataset: String,
    pub perf_metric: String,
    pub source_label: String,
    pub target_label: String,
    pub delta: f64,
    /// `p_ij[r] - mean(p_jj)` for each run `r` of the cross cell.
    pub run_deltas: Vec<f64>,
}

fn cross_key(dataset: &str, perf_metric: &str, i: &str, j: &str) -> Result<CellKey, PerfError> {
    if i == j {
        return Err(PerfError::SameDomain(i.to_string()));
    }
    Ok(CellKey::new(dataset, perf_metric, i, j))
}

pub fn performance_change(
    ledger: &PerformanceLedger,
    dataset: &str,
    perf_metric: &str,
    i: &str,
    j: &str,
) -> Result<PerformanceChange, PerfError> {
    let key = cross_key(dataset, perf_metric, i, j)?;
    let cross = ledger.require(&key)?;
    let base = ledger.require(&key.in_domain())?;
    let base_mean = stats::mean(&base);
    Ok(PerformanceChange {
        dataset: dataset.into(),
        perf_metric: perf_metric.into(),
        source_label: i.into(),
        target_label: j.into(),
        delta: stats::mean(&cross) - base_mean,
        run_deltas: cross.iter().map(|p| p - base_mean).collect(),
    })
}

pub fn change_significance(
    ledger: &PerformanceLedger,
    dataset: &str,
    perf_metric: &str,
    i: &str,
    j: &str,
) -> Result<TestResult, PerfError> {
    change_significance_with(ledger, dataset, perf_metric, i, j, false)
}

pub fn change_significance_with(
    ledger: &PerformanceLedger,
    dataset: &str,
    perf_metric: &str,
    i: &str,
    j: &str,
    equal_variance: bool,
) -> Result<TestResult, PerfError> {
    let key = cross_key(dataset, perf_metric, i, j)?;
    let cross = ledger.require(&key)?;
    let base = ledger.require(&key.in_domain())?;
    stats::two_sample_t_test(&cross, &base, equal_variance).map_err(|source| PerfError::Stats { key, source })
}
