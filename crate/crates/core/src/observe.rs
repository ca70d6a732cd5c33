//! Half-sampling drift observations and their significance test.
//!
//! Cross-domain observation `n` compares a random half of `T_i` with a random
//! half of `T_j`; in-domain observation `n` compares two disjoint halves of
//! `T_j`. Each observation has its own seed
//! `mix64(master ^ fnv1a64("obs/<mode>/<source>/<target>/<metric>/<n>"))`,
//! so values do not depend on evaluation order or thread count.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Corpus, CorpusError, Document, TemporalDomain};
use crate::drift::{self, DocSet, DriftError, MetricSpec};
use crate::embedding::EmbeddingTable;
use crate::lexical::TokenizerConfig;
use crate::rng;
use crate::stats::{self, StatsError, TestResult};

pub const DEFAULT_OBSERVATIONS: usize = 15;

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("observation {index} of {metric} ({source_label} vs {target_label}): {error}")]
    Metric {
        index: usize,
        metric: String,
        source_label: String,
        target_label: String,
        error: Box<DriftError>,
    },
    #[error("domain {label} has {size} documents, at least 2 are needed")]
    DomainTooSmall { label: String, size: usize },
    #[error("at least 2 observations are needed, got {0}")]
    TooFewObservations(usize),
    #[error("domain {label} references unknown document {id:?}")]
    UnknownDocument { label: String, id: String },
    #[error(transparent)]
    Sampling(#[from] CorpusError),
    #[error("observation sets do not match: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    CrossDomain,
    InDomain,
}

impl ObservationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ObservationMode::CrossDomain => "cross_domain",
            ObservationMode::InDomain => "in_domain",
        }
    }
}

impl fmt::Display for ObservationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub source_label: String,
    pub target_label: String,
    pub metric: MetricSpec,
    pub mode: ObservationMode,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl ObservationSet {
    pub fn mean(&self) -> f64 {
        stats::mean(&self.values)
    }
}

/// Everything a metric may need besides the two document sets.
#[derive(Debug, Clone, Copy)]
pub struct MeasureEnv<'a> {
    pub corpus: &'a Corpus,
    pub embeddings: &'a BTreeMap<String, EmbeddingTable>,
    pub tokenizer: &'a TokenizerConfig,
}

impl<'a> MeasureEnv<'a> {
    pub fn table_for(&self, metric: &MetricSpec) -> Option<&'a EmbeddingTable> {
        metric.encoder_id().and_then(|enc| self.embeddings.get(enc))
    }

    pub fn resolve(&self, label: &str, ids: &[String]) -> Result<Vec<&'a Document>, ObservationError> {
        self.corpus.resolve(ids).map_err(|id| ObservationError::UnknownDocument {
            label: label.to_string(),
            id,
        })
    }
}

pub fn observation_seed(
    master_seed: u64,
    mode: ObservationMode,
    source: &str,
    target: &str,
    metric: &MetricSpec,
    index: usize,
) -> u64 {
    rng::derive_seed(master_seed, &format!("obs/{mode}/{source}/{target}/{metric}/{index}"))
}

fn check_domain(d: &TemporalDomain) -> Result<(), ObservationError> {
    if d.len() < 2 {
        return Err(ObservationError::DomainTooSmall { label: d.label.clone(), size: d.len() });
    }
    Ok(())
}

fn collect_ordered(
    results: Vec<Result<f64, ObservationError>>,
) -> Result<Vec<f64>, ObservationError> {
    results.into_iter().collect()
}

/// `k` observations of `metric` between half-samples of two domains.
pub fn cross_domain_observations(
    domain_i: &TemporalDomain,
    domain_j: &TemporalDomain,
    metric: &MetricSpec,
    k: usize,
    master_seed: u64,
    env: &MeasureEnv<'_>,
) -> Result<ObservationSet, ObservationError> {
    check_domain(domain_i)?;
    check_domain(domain_j)?;
    if k < 2 {
        return Err(ObservationError::TooFewObservations(k));
    }
    let mode = ObservationMode::CrossDomain;
    let (src, tgt) = (domain_i.label.as_str(), domain_j.label.as_str());
    let seeds: Vec<u64> = (1..=k)
        .map(|n| observation_seed(master_seed, mode, src, tgt, metric, n))
        .collect();
    let table = env.table_for(metric);

    let results: Vec<_> = seeds
        .par_iter()
        .enumerate()
        .map(|(pos, &seed)| {
            let ids_a = corpus::sample_subset(domain_i, domain_i.len() / 2, rng::derive_seed(seed, "source"))?;
            let ids_b = corpus::sample_subset(domain_j, domain_j.len() / 2, rng::derive_seed(seed, "target"))?;
            let docs_a = env.resolve(src, &ids_a)?;
            let docs_b = env.resolve(tgt, &ids_b)?;
            drift::measure_value(DocSet::new(src, &docs_a), DocSet::new(tgt, &docs_b), metric, table, env.tokenizer)
                .map_err(|error| ObservationError::Metric {
                    index: pos + 1,
                    metric: metric.to_string(),
                    source_label: src.to_string(),
                    target_label: tgt.to_string(),
                    error: Box::new(error),
                })
        })
        .collect();

    Ok(ObservationSet {
        source_label: src.to_string(),
        target_label: tgt.to_string(),
        metric: metric.clone(),
        mode,
        values: collect_ordered(results)?,
        seeds,
    })
}

/// `k` observations of `metric` between two disjoint, equally sized halves
/// of one domain. With an odd size one document sits out each observation.
pub fn in_domain_observations(
    domain: &TemporalDomain,
    metric: &MetricSpec,
    k: usize,
    master_seed: u64,
    env: &MeasureEnv<'_>,
) -> Result<ObservationSet, ObservationError> {
    check_domain(domain)?;
    if k < 2 {
        return Err(ObservationError::TooFewObservations(k));
    }
    let mode = ObservationMode::InDomain;
    let label = domain.label.as_str();
    let seeds: Vec<u64> = (1..=k)
        .map(|n| observation_seed(master_seed, mode, label, label, metric, n))
        .collect();
    let table = env.table_for(metric);
    let half = domain.len() / 2;

    let results: Vec<_> = seeds
        .par_iter()
        .enumerate()
        .map(|(pos, &seed)| {
            let order = rng::shuffled(&domain.doc_ids, seed, &format!("halves/{label}"));
            let docs_a = env.resolve(label, &order[..half])?;
            let docs_b = env.resolve(label, &order[half..2 * half])?;
            drift::measure_value(DocSet::new(label, &docs_a), DocSet::new(label, &docs_b), metric, table, env.tokenizer)
                .map_err(|error| ObservationError::Metric {
                    index: pos + 1,
                    metric: metric.to_string(),
                    source_label: label.to_string(),
                    target_label: label.to_string(),
                    error: Box::new(error),
                })
        })
        .collect();

    Ok(ObservationSet {
        source_label: label.to_string(),
        target_label: label.to_string(),
        metric: metric.clone(),
        mode,
        values: collect_ordered(results)?,
        seeds,
    })
}

/// Two-tailed Welch test of cross-domain against in-domain observations.
pub fn drift_significance(cross: &ObservationSet, indom: &ObservationSet) -> Result<TestResult, ObservationError> {
    drift_significance_with(cross, indom, false)
}

pub fn drift_significance_with(
    cross: &ObservationSet,
    indom: &ObservationSet,
    equal_variance: bool,
) -> Result<TestResult, ObservationError> {
    if cross.mode != ObservationMode::CrossDomain || indom.mode != ObservationMode::InDomain {
        return Err(ObservationError::Mismatch(format!(
            "expected cross_domain vs in_domain, got {} vs {}",
            cross.mode, indom.mode
        )));
    }
    if cross.metric != indom.metric {
        return Err(ObservationError::Mismatch(format!("metrics {} and {}", cross.metric, indom.metric)));
    }
    if cross.target_label != indom.target_label {
        return Err(ObservationError::Mismatch(format!(
            "target {} vs in-domain {}",
            cross.target_label, indom.target_label
        )));
    }
    Ok(stats::two_sample_t_test(&cross.values, &indom.values, equal_variance)?)
}
