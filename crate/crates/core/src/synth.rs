//! Seeded synthetic corpora, embeddings and score grids.
//!
//! Used by the bundled toy fixture, the acceptance suite and the examples.
//! Nothing here is needed to analyse real data.

use chrono::NaiveDate;

use crate::corpus::Document;
use crate::embedding::EmbeddingTable;
use crate::perf::PerformanceRecord;
use crate::rng::{self, SplitMix64};

/// Standard normal variate (Box–Muller, one value per call).
pub fn normal(rng: &mut SplitMix64) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A vocabulary `w0, w1, ...` with Zipf-distributed token frequencies.
#[derive(Debug, Clone)]
pub struct ZipfVocab {
    tokens: Vec<String>,
    cdf: Vec<f64>,
}

impl ZipfVocab {
    pub fn new(size: usize, exponent: f64) -> Self {
        assert!(size > 0, "empty vocabulary");
        let tokens = (0..size).map(|i| format!("w{i}")).collect();
        let weights: Vec<f64> = (1..=size).map(|r| (r as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Self { tokens, cdf }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> &str {
        let u = rng.next_f64();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    /// `count` texts of `len` tokens each.
    pub fn texts(&self, rng: &mut SplitMix64, count: usize, len: usize) -> Vec<String> {
        (0..count)
            .map(|_| (0..len).map(|_| self.sample(rng)).collect::<Vec<_>>().join(" "))
            .collect()
    }
}

/// Replaces a `fraction` of `vocabulary` with novel tokens (`<token>x`).
///
/// The replaced tokens are a prefix of one seeded permutation, so the set
/// replaced at a smaller fraction is contained in the set replaced at a
/// larger one.
pub fn replace_vocabulary(texts: &[String], vocabulary: &[String], fraction: f64, seed: u64) -> Vec<String> {
    let order = rng::shuffled(vocabulary, seed, "replace");
    let count = ((fraction * vocabulary.len() as f64) + 1e-9).floor() as usize;
    let replaced: std::collections::HashSet<&str> = order[..count.min(order.len())].iter().map(String::as_str).collect();
    texts
        .iter()
        .map(|t| {
            t.split(' ')
                .map(|tok| if replaced.contains(tok) { format!("{tok}x") } else { tok.to_string() })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Parameters of a drifting multi-domain corpus with embeddings.
#[derive(Debug, Clone)]
pub struct DriftingCorpus {
    pub domains: usize,
    pub docs_per_domain: usize,
    pub doc_len: usize,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    /// Vocabulary fraction replaced per domain step.
    pub replace_step: f64,
    pub dim: usize,
    /// Rotation of the embedding center per domain step, in radians.
    pub angle_step: f64,
    pub embedding_noise: f64,
    /// Documents dated after the last domain, to exercise skipping.
    pub stray_docs: usize,
    pub first_year: i32,
    pub years_per_domain: i32,
    pub seed: u64,
}

impl Default for DriftingCorpus {
    fn default() -> Self {
        Self {
            domains: 4,
            docs_per_domain: 200,
            doc_len: 20,
            vocab_size: 400,
            zipf_exponent: 1.0,
            replace_step: 0.1,
            dim: 16,
            angle_step: 0.35,
            embedding_noise: 0.5,
            stray_docs: 0,
            first_year: 2008,
            years_per_domain: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub documents: Vec<Document>,
    pub embeddings: EmbeddingTable,
    pub labels: Vec<String>,
    /// Per-domain `(start, end)` dates, inclusive.
    pub ranges: Vec<(NaiveDate, NaiveDate)>,
}

impl DriftingCorpus {
    pub fn label(k: usize) -> String {
        format!("T{}", k + 1)
    }

    fn center(&self, k: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        let a = self.angle_step * k as f64;
        c[0] = a.cos();
        c[1 % self.dim] += a.sin();
        c[2 % self.dim] += 0.5;
        c
    }

    pub fn generate(&self, encoder_id: &str) -> GeneratedCorpus {
        let vocab = ZipfVocab::new(self.vocab_size, self.zipf_exponent);
        let mut rng = SplitMix64::new(rng::derive_seed(self.seed, "synth/texts"));
        let mut noise = SplitMix64::new(rng::derive_seed(self.seed, "synth/embeddings"));
        let mut dates = SplitMix64::new(rng::derive_seed(self.seed, "synth/dates"));
        let mut table = EmbeddingTable::new(encoder_id, self.dim);
        let mut documents = Vec::new();
        let mut ranges = Vec::new();
        let mut labels = Vec::new();

        let day = |year: i32, offset: u64| {
            NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year") + chrono::Days::new(offset)
        };
        let span_days = |years: i32| (365.25 * years as f64) as u64 - 1;

        for k in 0..self.domains + usize::from(self.stray_docs > 0) {
            let stray = k == self.domains;
            let count = if stray { self.stray_docs } else { self.docs_per_domain };
            let texts = vocab.texts(&mut rng, count, self.doc_len);
            let texts = replace_vocabulary(&texts, vocab.tokens(), self.replace_step * k as f64, self.seed);
            let year = self.first_year + self.years_per_domain * k as i32;
            let start = day(year, 0);
            let end = day(year + self.years_per_domain, 0) - chrono::Days::new(1);
            let center = self.center(k);
            let label = Self::label(k);
            for (n, text) in texts.into_iter().enumerate() {
                let id = format!("{label}-{n:04}");
                let date = day(year, dates.below(span_days(self.years_per_domain)));
                let mut doc = Document::new(&id, text).with_timestamp(date);
                if !stray {
                    doc = doc.with_label(&label);
                }
                let v: Vec<f64> = center.iter().map(|c| c + self.embedding_noise * normal(&mut noise)).collect();
                table.insert(&id, v).expect("fresh id, right dim");
                documents.push(doc);
            }
            if !stray {
                labels.push(label);
                ranges.push((start, end));
            }
        }
        GeneratedCorpus { documents, embeddings: table, labels, ranges }
    }
}

/// Runs of model scores whose performance changes are `delta(i, j)` exactly.
///
/// In-domain cells score `base(j)` on average and cross cells
/// `base(j) + delta(i, j)`; per-run noise is centered so that it never
/// moves a cell mean.
#[allow(clippy::too_many_arguments)]
pub fn score_grid(
    dataset: &str,
    perf_metric: &str,
    labels: &[String],
    base: impl Fn(usize) -> f64,
    delta: impl Fn(usize, usize) -> f64,
    runs: u32,
    run_sd: f64,
    seed: u64,
) -> Vec<PerformanceRecord> {
    let mut rng = SplitMix64::new(rng::derive_seed(seed, &format!("synth/scores/{dataset}/{perf_metric}")));
    let mut out = Vec::new();
    for (i, train) in labels.iter().enumerate() {
        for (j, test) in labels.iter().enumerate() {
            let mean = base(j) + if i == j { 0.0 } else { delta(i, j) };
            let noise: Vec<f64> = (0..runs).map(|_| run_sd * normal(&mut rng)).collect();
            let centre = noise.iter().sum::<f64>() / runs as f64;
            for (r, e) in noise.iter().enumerate() {
                out.push(PerformanceRecord {
                    dataset: dataset.into(),
                    perf_metric: perf_metric.into(),
                    train_domain: train.clone(),
                    test_domain: test.clone(),
                    run_index: r as u32 + 1,
                    score: mean + e - centre,
                });
            }
        }
    }
    out
}
