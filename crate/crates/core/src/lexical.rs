//! Tokenization, token sets and TF-IDF vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("TF-IDF statistics need at least one document")]
    EmptyCollection,
    #[error("min_token_len must be at least 1")]
    BadMinTokenLen,
}

/// Tokenizer settings. Tokens are maximal runs of Unicode alphanumeric
/// characters; everything else separates tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Tokens shorter than this many characters are dropped.
    pub min_token_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { lowercase: true, min_token_len: 1 }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), LexicalError> {
        if self.min_token_len == 0 {
            return Err(LexicalError::BadMinTokenLen);
        }
        Ok(())
    }
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|tok| !tok.is_empty() && tok.chars().count() >= config.min_token_len)
        .map(|tok| if config.lowercase { tok.to_lowercase() } else { tok.to_string() })
        .collect()
}

/// Distinct tokens across all documents.
pub fn token_type_set(docs: &[&Document], config: &TokenizerConfig) -> BTreeSet<String> {
    docs.iter().flat_map(|d| tokenize(&d.text, config)).collect()
}

fn term_counts(text: &str, config: &TokenizerConfig) -> (BTreeMap<String, usize>, usize) {
    let tokens = tokenize(text, config);
    let total = tokens.len();
    let mut counts = BTreeMap::new();
    for tok in tokens {
        *counts.entry(tok).or_insert(0) += 1;
    }
    (counts, total)
}

// ============================================================================
// TF-IDF
// ============================================================================

/// Document frequencies over a collection `D`, with the vocabulary sorted
/// lexicographically to fix coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfStats {
    collection_size: usize,
    vocabulary: Vec<String>,
    doc_freq: Vec<usize>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
}

impl TfIdfStats {
    pub fn collection_size(&self) -> usize {
        self.collection_size
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn doc_freq(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.doc_freq[i])
    }

    /// `ln(|D| / df(t))`; `None` for tokens outside the vocabulary.
    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }
}

pub fn build_tfidf_stats(
    docs: &[&Document],
    config: &TokenizerConfig,
) -> Result<TfIdfStats, LexicalError> {
    if docs.is_empty() {
        return Err(LexicalError::EmptyCollection);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let (counts, _) = term_counts(&doc.text, config);
        for tok in counts.into_keys() {
            *df.entry(tok).or_insert(0) += 1;
        }
    }
    let n = docs.len() as f64;
    let (vocabulary, doc_freq): (Vec<String>, Vec<usize>) = df.into_iter().unzip();
    let idf = doc_freq.iter().map(|&f| (n / f as f64).ln()).collect();
    let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TfIdfStats {
        collection_size: docs.len(),
        vocabulary,
        doc_freq,
        idf,
        index,
    })
}

/// Sparse TF-IDF weights keyed by vocabulary coordinate, sorted by index.
/// Zero weights are not stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfIdfVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl TfIdfVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, coord: usize) -> f64 {
        self.entries
            .binary_search_by_key(&coord, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            out[i] = w;
        }
        out
    }

    fn from_dense(dense: Vec<f64>) -> Self {
        let dim = dense.len();
        let entries = dense.into_iter().enumerate().filter(|&(_, w)| w != 0.0).collect();
        Self { dim, entries }
    }

    /// Dot product accumulated in ascending coordinate order.
    pub fn dot(&self, other: &TfIdfVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Per-document vector: `tf(t, d) * idf(t, D)` with `tf` the relative term
/// frequency. Tokens outside the vocabulary are ignored but still count
/// toward the document length.
pub fn tfidf_vector(doc: &Document, stats: &TfIdfStats, config: &TokenizerConfig) -> TfIdfVector {
    let (counts, total) = term_counts(&doc.text, config);
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .filter_map(|(tok, c)| {
            let i = stats.index_of(&tok)?;
            let w = (c as f64 / total as f64) * stats.idf[i];
            (w != 0.0).then_some((i, w))
        })
        .collect();
    entries.sort_unstable_by_key(|&(i, _)| i);
    TfIdfVector { dim: stats.vocabulary.len(), entries }
}

/// Coordinate-wise mean of the documents' TF-IDF vectors, summed in document
/// order.
pub fn domain_avg_tfidf(
    docs: &[&Document],
    stats: &TfIdfStats,
    config: &TokenizerConfig,
) -> Result<TfIdfVector, LexicalError> {
    if docs.is_empty() {
        return Err(LexicalError::EmptyCollection);
    }
    let mut acc = vec![0.0; stats.vocabulary.len()];
    for doc in docs {
        for &(i, w) in tfidf_vector(doc, stats, config).entries() {
            acc[i] += w;
        }
    }
    let n = docs.len() as f64;
    acc.iter_mut().for_each(|w| *w /= n);
    Ok(TfIdfVector::from_dense(acc))
}
