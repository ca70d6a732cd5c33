//! Word-level and semantic-level drift between two document collections.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Document;
use crate::embedding::EmbeddingTable;
use crate::lexical::{self, LexicalError, TokenizerConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DriftError {
    #[error("Jaccard similarity of two empty token sets is undefined")]
    EmptySets,
    #[error("{0} collection is empty")]
    EmptyCollection(String),
    #[error("domain-average vector of {0} is zero, cosine undefined")]
    ZeroVector(String),
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("document {0:?} has no embedding")]
    MissingEmbedding(String),
    #[error("metric {0} needs an embedding table")]
    MissingTable(String),
    #[error("metric wants encoder {expected:?} but table holds {found:?}")]
    EncoderMismatch { expected: String, found: String },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
}

// ============================================================================
// Metric descriptors
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Cosine,
    Euclidean,
    Manhattan,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Cosine => "cosine",
            Measure::Euclidean => "euclidean",
            Measure::Manhattan => "manhattan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(Measure::Cosine),
            "euclidean" => Some(Measure::Euclidean),
            "manhattan" => Some(Measure::Manhattan),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Similarity,
    Distance,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Similarity => "similarity",
            Kind::Distance => "distance",
        }
    }
}

/// A drift metric. Canonical text forms are `jaccard`, `tfidf_cosine` and
/// `embedding/<encoder>/<measure>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricSpec {
    Jaccard,
    TfIdfCosine,
    Embedding { encoder_id: String, measure: Measure },
}

impl MetricSpec {
    pub fn embedding(encoder_id: impl Into<String>, measure: Measure) -> Self {
        MetricSpec::Embedding { encoder_id: encoder_id.into(), measure }
    }

    pub fn family(&self) -> &'static str {
        match self {
            MetricSpec::Jaccard => "jaccard",
            MetricSpec::TfIdfCosine => "tfidf_cosine",
            MetricSpec::Embedding { .. } => "embedding",
        }
    }

    pub fn encoder_id(&self) -> Option<&str> {
        match self {
            MetricSpec::Embedding { encoder_id, .. } => Some(encoder_id),
            _ => None,
        }
    }

    pub fn measure(&self) -> Option<Measure> {
        match self {
            MetricSpec::Embedding { measure, .. } => Some(*measure),
            _ => None,
        }
    }

    pub fn kind(&self) -> Kind {
        match self.measure() {
            Some(Measure::Euclidean | Measure::Manhattan) => Kind::Distance,
            _ => Kind::Similarity,
        }
    }

    /// Rebuilds a spec from the three CSV columns.
    pub fn from_columns(family: &str, encoder_id: &str, measure: &str) -> Result<Self, DriftError> {
        let unknown = || DriftError::UnknownMetric(format!("{family}/{encoder_id}/{measure}"));
        match family {
            "jaccard" if encoder_id.is_empty() && measure.is_empty() => Ok(MetricSpec::Jaccard),
            "tfidf_cosine" if encoder_id.is_empty() && measure.is_empty() => Ok(MetricSpec::TfIdfCosine),
            "embedding" if !encoder_id.is_empty() => {
                let measure = Measure::parse(measure).ok_or_else(unknown)?;
                Ok(MetricSpec::embedding(encoder_id, measure))
            }
            _ => Err(unknown()),
        }
    }

    /// File-name friendly form, e.g. `embedding_use_cosine`.
    pub fn slug(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect()
    }

    /// Row heading used in correlation tables, e.g. `TF-IDF-Cosine`.
    pub fn display_name(&self) -> String {
        match self {
            MetricSpec::Jaccard => "Jaccard Similarity".into(),
            MetricSpec::TfIdfCosine => "TF-IDF-Cosine".into(),
            MetricSpec::Embedding { encoder_id, measure } => {
                let m = measure.as_str();
                format!("{encoder_id}-{}{}", m[..1].to_ascii_uppercase(), &m[1..])
            }
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Embedding { encoder_id, measure } => {
                write!(f, "embedding/{encoder_id}/{}", measure.as_str())
            }
            other => f.write_str(other.family()),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = DriftError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            ["jaccard"] => Ok(MetricSpec::Jaccard),
            ["tfidf_cosine"] => Ok(MetricSpec::TfIdfCosine),
            ["embedding", enc, measure] if !enc.is_empty() => Measure::parse(measure)
                .map(|m| MetricSpec::embedding(*enc, m))
                .ok_or_else(|| DriftError::UnknownMetric(s.to_string())),
            _ => Err(DriftError::UnknownMetric(s.to_string())),
        }
    }
}

impl Serialize for MetricSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One drift value between two labeled collections.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMeasurement {
    pub source_label: String,
    pub target_label: String,
    pub metric: MetricSpec,
    pub value: f64,
}

impl DriftMeasurement {
    pub fn kind(&self) -> Kind {
        self.metric.kind()
    }
}

// ============================================================================
// Word level
// ============================================================================

/// `|A ∩ B| / |A ∪ B|`.
pub fn jaccard_similarity(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<f64, DriftError> {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(DriftError::EmptySets);
    }
    Ok(inter as f64 / union as f64)
}

fn dedup_union<'a>(a: &[&'a Document], b: &[&'a Document]) -> Vec<&'a Document> {
    let mut seen = HashSet::new();
    a.iter().chain(b).copied().filter(|d| seen.insert(d.id.as_str())).collect()
}

/// Cosine between the domain-average TF-IDF vectors of two collections.
/// Vocabulary and idf come from the id-deduplicated union of both sides.
pub fn tfidf_cosine_similarity(
    docs_a: &[&Document],
    docs_b: &[&Document],
    config: &TokenizerConfig,
) -> Result<f64, DriftError> {
    tfidf_cosine_labeled(docs_a, "first", docs_b, "second", config)
}

fn tfidf_cosine_labeled(
    docs_a: &[&Document],
    label_a: &str,
    docs_b: &[&Document],
    label_b: &str,
    config: &TokenizerConfig,
) -> Result<f64, DriftError> {
    if docs_a.is_empty() {
        return Err(DriftError::EmptyCollection(label_a.into()));
    }
    if docs_b.is_empty() {
        return Err(DriftError::EmptyCollection(label_b.into()));
    }
    let union = dedup_union(docs_a, docs_b);
    let stats = lexical::build_tfidf_stats(&union, config)?;
    let va = lexical::domain_avg_tfidf(docs_a, &stats, config)?;
    let vb = lexical::domain_avg_tfidf(docs_b, &stats, config)?;
    if va.is_zero() {
        return Err(DriftError::ZeroVector(label_a.into()));
    }
    if vb.is_zero() {
        return Err(DriftError::ZeroVector(label_b.into()));
    }
    Ok(clamp_cosine(va.dot(&vb) / (va.norm() * vb.norm())))
}

// ============================================================================
// Semantic level
// ============================================================================

/// Mean of the listed documents' embeddings, accumulated in list order.
pub fn domain_avg_embedding<S: AsRef<str>>(
    doc_ids: &[S],
    table: &EmbeddingTable,
) -> Result<Vec<f64>, DriftError> {
    if doc_ids.is_empty() {
        return Err(DriftError::EmptyCollection("embedding".into()));
    }
    let mut acc = vec![0.0; table.dim()];
    for id in doc_ids {
        let id = id.as_ref();
        let v = table.get(id).ok_or_else(|| DriftError::MissingEmbedding(id.to_string()))?;
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    let n = doc_ids.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

fn clamp_cosine(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

pub fn vector_similarity(u: &[f64], v: &[f64], measure: Measure) -> Result<f64, DriftError> {
    if u.len() != v.len() {
        return Err(DriftError::LengthMismatch(u.len(), v.len()));
    }
    match measure {
        Measure::Cosine => {
            let norm = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (nu, nv) = (norm(u), norm(v));
            if nu == 0.0 {
                return Err(DriftError::ZeroVector("first".into()));
            }
            if nv == 0.0 {
                return Err(DriftError::ZeroVector("second".into()));
            }
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            Ok(clamp_cosine(dot / (nu * nv)))
        }
        Measure::Euclidean => Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()),
        Measure::Manhattan => Ok(u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum()),
    }
}

// ============================================================================
// Dispatch
// ============================================================================

/// A labeled document collection.
#[derive(Debug, Clone, Copy)]
pub struct DocSet<'a> {
    pub label: &'a str,
    pub docs: &'a [&'a Document],
}

impl<'a> DocSet<'a> {
    pub fn new(label: &'a str, docs: &'a [&'a Document]) -> Self {
        Self { label, docs }
    }
}

/// Value of `metric` between two collections; symmetric in its arguments.
pub fn measure_value(
    a: DocSet<'_>,
    b: DocSet<'_>,
    metric: &MetricSpec,
    table: Option<&EmbeddingTable>,
    config: &TokenizerConfig,
) -> Result<f64, DriftError> {
    match metric {
        MetricSpec::Jaccard => {
            let sa = lexical::token_type_set(a.docs, config);
            let sb = lexical::token_type_set(b.docs, config);
            jaccard_similarity(&sa, &sb)
        }
        MetricSpec::TfIdfCosine => tfidf_cosine_labeled(a.docs, a.label, b.docs, b.label, config),
        MetricSpec::Embedding { encoder_id, measure } => {
            let table = table.ok_or_else(|| DriftError::MissingTable(metric.to_string()))?;
            if table.encoder_id() != encoder_id {
                return Err(DriftError::EncoderMismatch {
                    expected: encoder_id.clone(),
                    found: table.encoder_id().to_string(),
                });
            }
            let avg = |set: DocSet<'_>| {
                if set.docs.is_empty() {
                    return Err(DriftError::EmptyCollection(set.label.into()));
                }
                let ids: Vec<&str> = set.docs.iter().map(|d| d.id.as_str()).collect();
                domain_avg_embedding(&ids, table)
            };
            let (ua, ub) = (avg(a)?, avg(b)?);
            vector_similarity(&ua, &ub, *measure).map_err(|e| match e {
                DriftError::ZeroVector(side) if side == "first" => DriftError::ZeroVector(a.label.into()),
                DriftError::ZeroVector(_) => DriftError::ZeroVector(b.label.into()),
                other => other,
            })
        }
    }
}

pub fn measure_drift(
    a: DocSet<'_>,
    b: DocSet<'_>,
    metric: &MetricSpec,
    table: Option<&EmbeddingTable>,
    config: &TokenizerConfig,
) -> Result<DriftMeasurement, DriftError> {
    let value = measure_value(a, b, metric, table, config)?;
    Ok(DriftMeasurement {
        source_label: a.label.to_string(),
        target_label: b.label.to_string(),
        metric: metric.clone(),
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn docs(prefix: &str, texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("{prefix}{i}"), *t).with_label(prefix))
            .collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_similarity(&set(&["a", "b", "c"]), &set(&["a", "b", "c"])), Ok(1.0));
        assert_eq!(jaccard_similarity(&set(&["a"]), &set(&["b"])), Ok(0.0));
        assert_eq!(jaccard_similarity(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), Ok(0.5));
        assert_eq!(jaccard_similarity(&set(&[]), &set(&[])), Err(DriftError::EmptySets));
    }

    #[test]
    fn tfidf_cosine_examples() {
        let cfg = TokenizerConfig::default();
        let a = docs("a", &["x y z", "y w", "q"]);
        let ra: Vec<_> = a.iter().collect();
        let c = tfidf_cosine_similarity(&ra, &ra, &cfg).unwrap();
        assert!((c - 1.0).abs() < 1e-12);

        let x = docs("a", &["x"]);
        let y = docs("b", &["y"]);
        let (rx, ry): (Vec<_>, Vec<_>) = (x.iter().collect(), y.iter().collect());
        assert_eq!(tfidf_cosine_similarity(&rx, &ry, &cfg), Ok(0.0));
    }

    #[test]
    fn tfidf_cosine_hand_value() {
        // ["x y"] vs ["x z"]: x appears in both docs so idf(x)=0; y and z sit
        // on orthogonal axes, so the cosine is exactly 0.
        let cfg = TokenizerConfig::default();
        let a = docs("a", &["x y"]);
        let b = docs("b", &["x z"]);
        let (ra, rb): (Vec<_>, Vec<_>) = (a.iter().collect(), b.iter().collect());
        assert_eq!(tfidf_cosine_similarity(&ra, &rb, &cfg), Ok(0.0));
    }

    #[test]
    fn tfidf_zero_vector_names_side() {
        let cfg = TokenizerConfig::default();
        let a = docs("T1", &["x"]);
        let b = docs("T2", &["x y"]);
        let (ra, rb): (Vec<_>, Vec<_>) = (a.iter().collect(), b.iter().collect());
        let err = measure_value(DocSet::new("T1", &ra), DocSet::new("T2", &rb), &MetricSpec::TfIdfCosine, None, &cfg);
        assert_eq!(err, Err(DriftError::ZeroVector("T1".into())));
    }

    #[test]
    fn vector_examples() {
        let u = [0.3, -1.0, 2.0];
        assert!((vector_similarity(&u, &u, Measure::Cosine).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(vector_similarity(&[0.0, 0.0], &[3.0, 4.0], Measure::Euclidean), Ok(5.0));
        assert_eq!(vector_similarity(&[1.0, 2.0], &[3.0, 5.0], Measure::Manhattan), Ok(5.0));
        assert_eq!(
            vector_similarity(&[1.0], &[1.0, 2.0], Measure::Euclidean),
            Err(DriftError::LengthMismatch(1, 2))
        );
        assert!(matches!(
            vector_similarity(&[0.0, 0.0], &[1.0, 2.0], Measure::Cosine),
            Err(DriftError::ZeroVector(_))
        ));
    }

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new("enc", 2);
        t.insert("p", vec![1.0, 0.0]).unwrap();
        t.insert("q", vec![0.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn domain_average_embedding() {
        let t = table();
        assert_eq!(domain_avg_embedding(&["p"], &t), Ok(vec![1.0, 0.0]));
        assert_eq!(domain_avg_embedding(&["p", "q"], &t), Ok(vec![0.5, 0.5]));
        assert_eq!(domain_avg_embedding(&["zz"], &t), Err(DriftError::MissingEmbedding("zz".into())));
    }

    #[test]
    fn dispatch_examples() {
        let cfg = TokenizerConfig::default();
        let d = [Document::new("p", "alpha beta").with_label("T1"), Document::new("q", "gamma").with_label("T1")];
        let r: Vec<_> = d.iter().collect();
        let s = DocSet::new("T1", &r);
        let j = measure_drift(s, s, &MetricSpec::Jaccard, None, &cfg).unwrap();
        assert_eq!((j.value, j.kind()), (1.0, Kind::Similarity));

        let t = table();
        let euclid = MetricSpec::embedding("enc", Measure::Euclidean);
        let e = measure_drift(s, s, &euclid, Some(&t), &cfg).unwrap();
        assert_eq!((e.value, e.kind()), (0.0, Kind::Distance));

        assert_eq!(
            measure_value(s, s, &euclid, None, &cfg),
            Err(DriftError::MissingTable("embedding/enc/euclidean".into()))
        );
        let other = MetricSpec::embedding("other", Measure::Cosine);
        assert!(matches!(measure_value(s, s, &other, Some(&t), &cfg), Err(DriftError::EncoderMismatch { .. })));
    }

    #[test]
    fn metric_spec_text_forms() {
        for s in ["jaccard", "tfidf_cosine", "embedding/use/cosine", "embedding/sbert/manhattan"] {
            assert_eq!(s.parse::<MetricSpec>().unwrap().to_string(), s);
        }
        assert!("kl_divergence".parse::<MetricSpec>().is_err());
        assert!("embedding//cosine".parse::<MetricSpec>().is_err());
        assert!("embedding/use/chebyshev".parse::<MetricSpec>().is_err());
        let m = MetricSpec::embedding("USE", Measure::Euclidean);
        assert_eq!(m.display_name(), "USE-Euclidean");
        assert_eq!(m.slug(), "embedding_USE_euclidean");
        assert_eq!(MetricSpec::from_columns("embedding", "USE", "euclidean").unwrap(), m);
        assert_eq!(MetricSpec::from_columns("jaccard", "", "").unwrap(), MetricSpec::Jaccard);
        assert_eq!(MetricSpec::TfIdfCosine.kind(), Kind::Similarity);
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(
            u in proptest::collection::vec(-10.0f64..10.0, 5),
            v in proptest::collection::vec(-10.0f64..10.0, 5),
            scale in 0.001f64..1000.0,
        ) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
            let base = vector_similarity(&u, &v, Measure::Cosine).unwrap();
            let su: Vec<f64> = u.iter().map(|x| x * scale).collect();
            let sv: Vec<f64> = v.iter().map(|x| x * scale).collect();
            let scaled = vector_similarity(&su, &sv, Measure::Cosine).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
        }

        #[test]
        fn triangle_inequality(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 3),
        ) {
            for m in [Measure::Euclidean, Measure::Manhattan] {
                let d = |i: usize, j: usize| vector_similarity(&pts[i], &pts[j], m).unwrap();
                prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
            }
        }

        #[test]
        fn metrics_are_symmetric(
            ta in proptest::collection::vec("[a-f]( [a-f]){0,5}", 1..5),
            tb in proptest::collection::vec("[a-h]( [a-h]){0,5}", 1..5),
        ) {
            let cfg = TokenizerConfig::default();
            let a: Vec<Document> = ta.iter().enumerate().map(|(i, t)| Document::new(format!("a{i}"), t.as_str()).with_label("A")).collect();
            let b: Vec<Document> = tb.iter().enumerate().map(|(i, t)| Document::new(format!("b{i}"), t.as_str()).with_label("B")).collect();
            let (ra, rb): (Vec<_>, Vec<_>) = (a.iter().collect(), b.iter().collect());
            let (sa, sb) = (DocSet::new("A", &ra), DocSet::new("B", &rb));
            for m in [MetricSpec::Jaccard, MetricSpec::TfIdfCosine] {
                let ab = measure_value(sa, sb, &m, None, &cfg);
                let ba = measure_value(sb, sa, &m, None, &cfg);
                match (ab, ba) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                    (Err(_), Err(_)) => {}
                    other => prop_assert!(false, "asymmetric outcome {:?}", other),
                }
            }
        }
    }
}
