//! Corpus ingestion, temporal segmentation, size equalization and
//! train/test split manifests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("duplicate document id {id:?} (line {line})")]
    DuplicateId { id: String, line: u64 },
    #[error("document {id:?} has neither a timestamp nor a domain label")]
    MissingTimeInfo { id: String },
    #[error("unsupported corpus format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("invalid segmentation: {0}")]
    Segmentation(String),
    #[error("date ranges {first} and {second} overlap")]
    OverlappingRanges { first: String, second: String },
    #[error("domain {0} is empty after segmentation")]
    EmptyDomain(String),
    #[error("document {id:?} matches no domain ({reason})")]
    Unassigned { id: String, reason: String },
    #[error("domain {label} has {size} documents, too few to split at test fraction {fraction}")]
    DomainTooSmall { label: String, size: usize, fraction: f64 },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("sample count {count} out of range for domain {label} of size {size}")]
    CountOutOfRange { label: String, count: usize, size: usize },
}

// ============================================================================
// Documents
// ============================================================================

/// One text unit of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub timestamp: Option<NaiveDate>,
    pub domain_label: Option<String>,
    /// Task payload carried through untouched (gold labels, answers, ...).
    pub payload: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            timestamp: None,
            domain_label: None,
            payload: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.domain_label = Some(label.into());
        self
    }

    pub fn with_timestamp(mut self, date: NaiveDate) -> Self {
        self.timestamp = Some(date);
        self
    }
}

/// An immutable, id-indexed document collection.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and documents lacking time
    /// information.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(docs.len());
        for (pos, doc) in docs.iter().enumerate() {
            validate_document(doc)?;
            if index.insert(doc.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: doc.id.clone(),
                    line: pos as u64 + 1,
                });
            }
        }
        Ok(Self { docs, index })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    /// Resolves a list of ids, failing on the first unknown one.
    pub fn resolve<'a, S: AsRef<str>>(&'a self, ids: &[S]) -> Result<Vec<&'a Document>, String> {
        ids.iter()
            .map(|id| self.get(id.as_ref()).ok_or_else(|| id.as_ref().to_string()))
            .collect()
    }
}

fn validate_document(doc: &Document) -> Result<(), CorpusError> {
    if doc.timestamp.is_none() && doc.domain_label.is_none() {
        return Err(CorpusError::MissingTimeInfo { id: doc.id.clone() });
    }
    Ok(())
}

// ============================================================================
// Loading
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    pub fn parse(name: &str) -> Result<Self, CorpusError> {
        match name.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }

    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
        Self::parse(ext)
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    timestamp: Option<String>,
    #[serde(default)]
    domain: Option<String>,
    #[serde(default)]
    payload: Option<String>,
}

fn non_empty(field: Option<String>) -> Option<String> {
    field.filter(|s| !s.is_empty())
}

impl RawRecord {
    fn into_document(self, path: &Path, line: u64) -> Result<Document, CorpusError> {
        let malformed = |message: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        if self.id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        let timestamp = non_empty(self.timestamp)
            .map(|s| {
                NaiveDate::parse_from_str(&s, DATE_FORMAT)
                    .map_err(|e| malformed(format!("bad timestamp {s:?}: {e}")))
            })
            .transpose()?;
        let doc = Document {
            id: self.id,
            text: self.text,
            timestamp,
            domain_label: non_empty(self.domain),
            payload: non_empty(self.payload),
        };
        validate_document(&doc)?;
        Ok(doc)
    }
}

/// Reads a JSONL or CSV corpus. Line numbers in errors are 1-based file lines.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut docs = Vec::new();
    let mut lines = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i as u64 + 1;
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRecord =
                    serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: e.to_string(),
                    })?;
                docs.push(raw.into_document(path, line_no)?);
                lines.push(line_no);
            }
        }
        CorpusFormat::Csv => {
            let csv_err = |e: csv::Error| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line()).unwrap_or(1),
                message: e.to_string(),
            };
            let mut reader = csv::Reader::from_reader(file);
            let headers = reader.headers().map_err(csv_err)?.clone();
            let mut record = csv::StringRecord::new();
            while reader.read_record(&mut record).map_err(csv_err)? {
                let line_no = record.position().map(|p| p.line()).unwrap_or(0);
                let raw: RawRecord = record.deserialize(Some(&headers)).map_err(|e| CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
                docs.push(raw.into_document(path, line_no)?);
                lines.push(line_no);
            }
        }
    }
    let mut seen = HashSet::with_capacity(docs.len());
    for (doc, &line) in docs.iter().zip(&lines) {
        if !seen.insert(doc.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: doc.id.clone(),
                line,
            });
        }
    }
    Corpus::from_documents(docs)
}

// ============================================================================
// Temporal domains
// ============================================================================

/// A closed interval of calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// A time bucket treated as a data domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalDomain {
    pub label: String,
    pub ordinal: u32,
    pub doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_range: Option<DateRange>,
}

impl TemporalDomain {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateBucket {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// How documents are assigned to domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmentation {
    /// Explicit `domain` labels mapped to ordinals 1..K.
    Labels(BTreeMap<String, u32>),
    /// Disjoint closed date ranges; ordinals follow start dates.
    DateRanges(Vec<DateBucket>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDocument {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmented {
    pub domains: Vec<TemporalDomain>,
    pub skipped: Vec<SkippedDocument>,
}

enum Bucketer<'a> {
    Labels(&'a BTreeMap<String, u32>),
    Dates(Vec<(&'a DateBucket, u32)>),
}

impl Bucketer<'_> {
    /// Ordinal of the doc's bucket, or the reason it has none.
    fn assign(&self, doc: &Document) -> Result<u32, String> {
        match self {
            Bucketer::Labels(map) => match &doc.domain_label {
                None => Err("no domain label".into()),
                Some(label) => map
                    .get(label)
                    .copied()
                    .ok_or_else(|| format!("unknown label {label:?}")),
            },
            Bucketer::Dates(buckets) => {
                let Some(date) = doc.timestamp else {
                    return Err("no timestamp".into());
                };
                buckets
                    .iter()
                    .find(|(b, _)| b.start <= date && date <= b.end)
                    .map(|&(_, ord)| ord)
                    .ok_or_else(|| format!("date {date} outside all ranges"))
            }
        }
    }
}

/// Partitions the corpus into ordered temporal domains.
///
/// Documents that fit no bucket are listed in `skipped`, or abort the call
/// when `strict` is set.
pub fn segment_domains(
    corpus: &Corpus,
    strategy: &Segmentation,
    strict: bool,
) -> Result<Segmented, CorpusError> {
    // (label, ordinal, range) in ordinal order
    let mut slots: Vec<(String, u32, Option<DateRange>)>;
    let bucketer = match strategy {
        Segmentation::Labels(map) => {
            if map.is_empty() {
                return Err(CorpusError::Segmentation("empty label map".into()));
            }
            let mut ordinals: Vec<u32> = map.values().copied().collect();
            ordinals.sort_unstable();
            if ordinals.iter().enumerate().any(|(i, &o)| o as usize != i + 1) {
                return Err(CorpusError::Segmentation(format!(
                    "label ordinals must be 1..{} each used once, got {ordinals:?}",
                    map.len()
                )));
            }
            slots = map.iter().map(|(l, &o)| (l.clone(), o, None)).collect();
            slots.sort_by_key(|s| s.1);
            Bucketer::Labels(map)
        }
        Segmentation::DateRanges(buckets) => {
            if buckets.is_empty() {
                return Err(CorpusError::Segmentation("no date ranges".into()));
            }
            let mut sorted: Vec<&DateBucket> = buckets.iter().collect();
            sorted.sort_by_key(|b| (b.start, b.end));
            let mut labels = HashSet::new();
            for b in &sorted {
                if b.start > b.end {
                    return Err(CorpusError::Segmentation(format!(
                        "range {} ends before it starts",
                        b.label
                    )));
                }
                if !labels.insert(b.label.as_str()) {
                    return Err(CorpusError::Segmentation(format!("duplicate label {}", b.label)));
                }
            }
            for pair in sorted.windows(2) {
                if pair[1].start <= pair[0].end {
                    return Err(CorpusError::OverlappingRanges {
                        first: pair[0].label.clone(),
                        second: pair[1].label.clone(),
                    });
                }
            }
            slots = sorted
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let range = DateRange { start: b.start, end: b.end };
                    (b.label.clone(), i as u32 + 1, Some(range))
                })
                .collect();
            Bucketer::Dates(sorted.into_iter().zip(1..).collect())
        }
    };

    let mut members: Vec<Vec<String>> = vec![Vec::new(); slots.len()];
    let mut skipped = Vec::new();
    for doc in corpus.documents() {
        match bucketer.assign(doc) {
            Ok(ordinal) => members[ordinal as usize - 1].push(doc.id.clone()),
            Err(reason) if strict => {
                return Err(CorpusError::Unassigned { id: doc.id.clone(), reason })
            }
            Err(reason) => skipped.push(SkippedDocument { id: doc.id.clone(), reason }),
        }
    }

    let domains = slots
        .into_iter()
        .zip(members)
        .map(|((label, ordinal, date_range), doc_ids)| {
            if doc_ids.is_empty() {
                Err(CorpusError::EmptyDomain(label))
            } else {
                Ok(TemporalDomain { label, ordinal, doc_ids, date_range })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Segmented { domains, skipped })
}

/// Downsamples every domain to the size of the smallest one.
///
/// Selection is uniform without replacement under the seed context
/// `equalize/<label>`; kept documents retain their original order.
pub fn equalize_domains(domains: &[TemporalDomain], seed: u64) -> Vec<TemporalDomain> {
    let Some(target) = domains.iter().map(TemporalDomain::len).min() else {
        return Vec::new();
    };
    domains
        .iter()
        .map(|d| {
            if d.len() == target {
                return d.clone();
            }
            let positions: Vec<usize> = (0..d.len()).collect();
            let mut keep = rng::shuffled(&positions, seed, &format!("equalize/{}", d.label));
            keep.truncate(target);
            keep.sort_unstable();
            TemporalDomain {
                doc_ids: keep.into_iter().map(|i| d.doc_ids[i].clone()).collect(),
                ..d.clone()
            }
        })
        .collect()
}

// ============================================================================
// Splits and subsamples
// ============================================================================

/// Held-out split of one domain. Id lists are sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    #[serde(rename = "domain")]
    pub domain_label: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// `floor(fraction * n)`, nudged so that products like `0.29 * 100` land on
/// the intended integer.
pub fn test_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Seeded Fisher–Yates shuffle under context `split/<label>`, then the first
/// `floor(test_fraction * n)` ids become the test set.
pub fn split_train_test(
    domain: &TemporalDomain,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitManifest, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::BadFraction(test_fraction));
    }
    let n = domain.len();
    let n_test = test_count(test_fraction, n);
    if n < 2 || n_test == 0 || n_test >= n {
        return Err(CorpusError::DomainTooSmall {
            label: domain.label.clone(),
            size: n,
            fraction: test_fraction,
        });
    }
    let order = rng::shuffled(&domain.doc_ids, seed, &format!("split/{}", domain.label));
    let mut test_ids = order[..n_test].to_vec();
    let mut train_ids = order[n_test..].to_vec();
    test_ids.sort();
    train_ids.sort();
    Ok(SplitManifest {
        domain_label: domain.label.clone(),
        seed,
        test_fraction,
        train_ids,
        test_ids,
    })
}

/// `count` distinct ids drawn without replacement (context `sample/<label>`).
pub fn sample_subset(
    domain: &TemporalDomain,
    count: usize,
    seed: u64,
) -> Result<Vec<String>, CorpusError> {
    if count == 0 || count > domain.len() {
        return Err(CorpusError::CountOutOfRange {
            label: domain.label.clone(),
            count,
            size: domain.len(),
        });
    }
    let mut order = rng::shuffled(&domain.doc_ids, seed, &format!("sample/{}", domain.label));
    order.truncate(count);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn domain(label: &str, n: usize) -> TemporalDomain {
        TemporalDomain {
            label: label.into(),
            ordinal: 1,
            doc_ids: (0..n).map(|i| format!("{label}-{i:03}")).collect(),
            date_range: None,
        }
    }

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_line_jsonl() {
        let f = write_tmp(
            concat!(
                r#"{"id":"a","text":"one","domain":"T1"}"#,
                "\n",
                r#"{"id":"b","text":"two","timestamp":"2010-05-01"}"#,
                "\n",
                r#"{"id":"c","text":"three","domain":"T2","payload":"B-DISEASE"}"#,
                "\n"
            ),
            ".jsonl",
        );
        let corpus = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.get("b").unwrap().timestamp, Some(date("2010-05-01")));
        assert_eq!(corpus.get("c").unwrap().payload.as_deref(), Some("B-DISEASE"));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let f = write_tmp(
            "{\"id\":\"d1\",\"text\":\"x\",\"domain\":\"A\"}\n{\"id\":\"d1\",\"text\":\"y\",\"domain\":\"A\"}\n",
            ".jsonl",
        );
        match load_corpus(f.path(), CorpusFormat::Jsonl) {
            Err(CorpusError::DuplicateId { id, line }) => {
                assert_eq!(id, "d1");
                assert_eq!(line, 2);
            }
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn missing_time_info_names_the_document() {
        let f = write_tmp("{\"id\":\"lonely\",\"text\":\"x\"}\n", ".jsonl");
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::MissingTimeInfo { ref id } if id == "lonely"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"id\":\"a\",\"text\":\"x\",\"domain\":\"A\"}\n{not json\n", ".jsonl");
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn loads_quoted_csv() {
        let f = write_tmp(
            "id,text,timestamp,domain,payload\nd1,\"hello, world\",2012-01-01,,\nd2,\"say \"\"hi\"\"\",,T2,gold\n",
            ".csv",
        );
        let corpus = load_corpus(f.path(), CorpusFormat::Csv).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.get("d1").unwrap().text, "hello, world");
        assert_eq!(corpus.get("d2").unwrap().text, "say \"hi\"");
        assert_eq!(corpus.get("d2").unwrap().domain_label.as_deref(), Some("T2"));
        assert_eq!(corpus.get("d1").unwrap().domain_label, None);
    }

    #[test]
    fn label_segmentation_groups_by_map() {
        let docs = vec![
            Document::new("1", "a").with_label("A"),
            Document::new("2", "b").with_label("A"),
            Document::new("3", "c").with_label("B"),
        ];
        let corpus = Corpus::from_documents(docs).unwrap();
        let map = BTreeMap::from([("A".to_string(), 1), ("B".to_string(), 2)]);
        let seg = segment_domains(&corpus, &Segmentation::Labels(map), false).unwrap();
        let sizes: Vec<_> = seg.domains.iter().map(|d| (d.label.as_str(), d.len())).collect();
        assert_eq!(sizes, vec![("A", 2), ("B", 1)]);
        assert!(seg.skipped.is_empty());
    }

    fn mimic_ranges() -> Segmentation {
        // Listed out of order on purpose, as in the source table.
        Segmentation::DateRanges(
            [("T3", 2014, 2016), ("T1", 2008, 2010), ("T2", 2011, 2013), ("T4", 2017, 2019)]
                .iter()
                .map(|&(l, a, b)| DateBucket {
                    label: l.into(),
                    start: NaiveDate::from_ymd_opt(a, 1, 1).unwrap(),
                    end: NaiveDate::from_ymd_opt(b, 12, 31).unwrap(),
                })
                .collect(),
        )
    }

    fn dated_corpus(years: &[i32]) -> Corpus {
        let docs = years
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                Document::new(format!("d{i}"), "x")
                    .with_timestamp(NaiveDate::from_ymd_opt(y, 6, 15).unwrap())
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn date_ranges_order_domains_by_time() {
        let corpus = dated_corpus(&[2019, 2008, 2012, 2015, 2009, 2017]);
        let seg = segment_domains(&corpus, &mimic_ranges(), false).unwrap();
        let labels: Vec<_> = seg.domains.iter().map(|d| (d.label.as_str(), d.ordinal)).collect();
        assert_eq!(labels, vec![("T1", 1), ("T2", 2), ("T3", 3), ("T4", 4)]);
        assert_eq!(seg.domains[0].doc_ids, vec!["d1", "d4"]);
        assert_eq!(seg.domains[3].doc_ids, vec!["d0", "d5"]);
    }

    #[test]
    fn out_of_range_doc_is_skipped_or_rejected() {
        let corpus = dated_corpus(&[2008, 2012, 2015, 2018, 2024]);
        let seg = segment_domains(&corpus, &mimic_ranges(), false).unwrap();
        assert_eq!(seg.skipped.len(), 1);
        assert_eq!(seg.skipped[0].id, "d4");
        let total: usize = seg.domains.iter().map(TemporalDomain::len).sum();
        assert_eq!(total + seg.skipped.len(), corpus.len());

        let err = segment_domains(&corpus, &mimic_ranges(), true).unwrap_err();
        assert!(matches!(err, CorpusError::Unassigned { ref id, .. } if id == "d4"));
    }

    #[test]
    fn overlapping_ranges_are_rejected() {
        let seg = Segmentation::DateRanges(vec![
            DateBucket { label: "a".into(), start: date("2008-01-01"), end: date("2011-01-01") },
            DateBucket { label: "b".into(), start: date("2011-01-01"), end: date("2013-12-31") },
        ]);
        let corpus = dated_corpus(&[2009]);
        assert!(matches!(
            segment_domains(&corpus, &seg, false),
            Err(CorpusError::OverlappingRanges { .. })
        ));
    }

    #[test]
    fn empty_domain_is_an_error() {
        let corpus = dated_corpus(&[2008, 2012, 2015]);
        assert!(matches!(
            segment_domains(&corpus, &mimic_ranges(), false),
            Err(CorpusError::EmptyDomain(ref l)) if l == "T4"
        ));
    }

    #[test]
    fn bad_label_ordinals_are_rejected() {
        let corpus = Corpus::from_documents(vec![Document::new("1", "a").with_label("A")]).unwrap();
        let map = BTreeMap::from([("A".to_string(), 1), ("B".to_string(), 3)]);
        assert!(matches!(
            segment_domains(&corpus, &Segmentation::Labels(map), false),
            Err(CorpusError::Segmentation(_))
        ));
    }

    #[test]
    fn equalize_to_smallest() {
        let domains: Vec<_> = [("T1", 10), ("T2", 8), ("T3", 12), ("T4", 9)]
            .iter()
            .map(|&(l, n)| domain(l, n))
            .collect();
        let eq = equalize_domains(&domains, 11);
        assert!(eq.iter().all(|d| d.len() == 8));
        // Order preserved: kept ids are an increasing subsequence.
        for (orig, kept) in domains.iter().zip(&eq) {
            let positions: Vec<_> = kept
                .doc_ids
                .iter()
                .map(|id| orig.doc_ids.iter().position(|x| x == id).unwrap())
                .collect();
            assert!(positions.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(eq, equalize_domains(&domains, 11));
        assert_eq!(eq[1], domains[1]);
    }

    #[test]
    fn equal_sizes_are_untouched() {
        let domains = vec![domain("A", 5), domain("B", 5)];
        assert_eq!(equalize_domains(&domains, 3), domains);
    }

    #[test]
    fn split_sizes_use_floor() {
        let m = split_train_test(&domain("T1", 10), 0.2, 5).unwrap();
        assert_eq!((m.test_ids.len(), m.train_ids.len()), (2, 8));
        let m = split_train_test(&domain("T1", 5), 0.2, 5).unwrap();
        assert_eq!((m.test_ids.len(), m.train_ids.len()), (1, 4));
        assert_eq!(test_count(0.29, 100), 29);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let d = domain("T2", 37);
        let a = split_train_test(&d, 0.2, 99).unwrap();
        let b = split_train_test(&d, 0.2, 99).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let mut all: Vec<_> = a.train_ids.iter().chain(&a.test_ids).cloned().collect();
        all.sort();
        let mut expected = d.doc_ids.clone();
        expected.sort();
        assert_eq!(all, expected);
        assert_ne!(a.test_ids, split_train_test(&d, 0.2, 100).unwrap().test_ids);
    }

    #[test]
    fn split_rejects_tiny_domains_and_bad_fractions() {
        assert!(matches!(
            split_train_test(&domain("T", 4), 0.2, 1),
            Err(CorpusError::DomainTooSmall { .. })
        ));
        assert!(matches!(split_train_test(&domain("T", 10), 1.0, 1), Err(CorpusError::BadFraction(_))));
        assert!(matches!(split_train_test(&domain("T", 10), 0.0, 1), Err(CorpusError::BadFraction(_))));
    }

    #[test]
    fn manifest_json_key_order() {
        let m = split_train_test(&domain("T1", 5), 0.2, 5).unwrap();
        let json = m.to_json();
        let keys = ["\"domain\"", "\"seed\"", "\"test_fraction\"", "\"train_ids\"", "\"test_ids\""];
        let positions: Vec<_> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sample_subset_edges() {
        let d = domain("T1", 6);
        let all = sample_subset(&d, 6, 1).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, d.doc_ids);

        let single = domain("S", 1);
        assert_eq!(sample_subset(&single, 1, 42).unwrap(), single.doc_ids);

        assert!(sample_subset(&d, 0, 1).is_err());
        assert!(sample_subset(&d, 7, 1).is_err());
    }

    #[test]
    fn half_samples_differ_across_seeds() {
        let d = domain("T1", 100);
        let differing = (0..20u64)
            .filter(|&s| {
                let mut a = sample_subset(&d, 50, 2 * s).unwrap();
                let mut b = sample_subset(&d, 50, 2 * s + 1).unwrap();
                a.sort();
                b.sort();
                a != b
            })
            .count();
        assert!(differing >= 19);
    }
}
