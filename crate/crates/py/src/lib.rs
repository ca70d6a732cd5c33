//! Python bindings for tempdrift.
//!
//! Build with `cargo build -p tempdrift-py --release` and import the
//! resulting shared library as `tempdrift`.

use pyo3::prelude::*;

#[pymodule]
mod tempdrift {
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    use pyo3::exceptions::{PyOSError, PyValueError};
    use pyo3::prelude::*;
    use tempdrift_core::config::{CorrelateWith, DriftSplit, Overrides};
    use tempdrift_core::corpus::{self, CorpusFormat, Document};
    use tempdrift_core::correlation;
    use tempdrift_core::drift::{self, DocSet, Measure, MetricSpec};
    use tempdrift_core::embedding;
    use tempdrift_core::lexical::{self, TokenizerConfig};
    use tempdrift_core::pipeline::{self, Stage};
    use tempdrift_core::stats;

    fn value_err(e: impl std::fmt::Display) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn tokenizer(lowercase: bool, min_token_len: usize) -> PyResult<TokenizerConfig> {
        let cfg = TokenizerConfig { lowercase, min_token_len };
        cfg.validate().map_err(value_err)?;
        Ok(cfg)
    }

    fn documents(prefix: &str, texts: &[String]) -> Vec<Document> {
        texts.iter().enumerate().map(|(i, t)| Document::new(format!("{prefix}{i}"), t.as_str())).collect()
    }

    fn parse_measure(name: &str) -> PyResult<Measure> {
        Measure::parse(name).ok_or_else(|| value_err(format!("unknown measure {name:?}")))
    }

    #[pyfunction]
    #[pyo3(signature = (text, lowercase = true, min_token_len = 1))]
    fn tokenize(text: &str, lowercase: bool, min_token_len: usize) -> PyResult<Vec<String>> {
        Ok(lexical::tokenize(text, &tokenizer(lowercase, min_token_len)?))
    }

    /// Jaccard similarity of the token type sets of two text collections.
    #[pyfunction]
    #[pyo3(signature = (texts_a, texts_b, lowercase = true, min_token_len = 1))]
    fn jaccard(texts_a: Vec<String>, texts_b: Vec<String>, lowercase: bool, min_token_len: usize) -> PyResult<f64> {
        let cfg = tokenizer(lowercase, min_token_len)?;
        let (a, b) = (documents("a", &texts_a), documents("b", &texts_b));
        let (ra, rb): (Vec<&Document>, Vec<&Document>) = (a.iter().collect(), b.iter().collect());
        drift::measure_value(DocSet::new("a", &ra), DocSet::new("b", &rb), &MetricSpec::Jaccard, None, &cfg).map_err(value_err)
    }

    /// Cosine between the average TF-IDF vectors of two text collections.
    #[pyfunction]
    #[pyo3(signature = (texts_a, texts_b, lowercase = true, min_token_len = 1))]
    fn tfidf_cosine(texts_a: Vec<String>, texts_b: Vec<String>, lowercase: bool, min_token_len: usize) -> PyResult<f64> {
        let cfg = tokenizer(lowercase, min_token_len)?;
        let (a, b) = (documents("a", &texts_a), documents("b", &texts_b));
        let (ra, rb): (Vec<&Document>, Vec<&Document>) = (a.iter().collect(), b.iter().collect());
        drift::tfidf_cosine_similarity(&ra, &rb, &cfg).map_err(value_err)
    }

    /// `measure` is one of "cosine", "euclidean", "manhattan".
    #[pyfunction]
    fn vector_similarity(u: Vec<f64>, v: Vec<f64>, measure: &str) -> PyResult<f64> {
        drift::vector_similarity(&u, &v, parse_measure(measure)?).map_err(value_err)
    }

    #[pyfunction]
    fn student_t_cdf(t: f64, df: f64) -> PyResult<f64> {
        stats::student_t_cdf(t, df).map_err(value_err)
    }

    /// Two-sample t-test; returns `(t, df, p)`.
    #[pyfunction]
    #[pyo3(signature = (xs, ys, equal_variance = false))]
    fn t_test(xs: Vec<f64>, ys: Vec<f64>, equal_variance: bool) -> PyResult<(f64, f64, f64)> {
        let r = stats::two_sample_t_test(&xs, &ys, equal_variance).map_err(value_err)?;
        Ok((r.statistic, r.df, r.p_value))
    }

    /// Returns `(r, p)`.
    #[pyfunction]
    fn pearson(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(f64, f64)> {
        let c = stats::pearson_correlation(&xs, &ys).map_err(value_err)?;
        Ok((c.r, c.p_value))
    }

    /// Table cell text such as ".68*".
    #[pyfunction]
    fn annotate_significance(r: f64, p: f64) -> String {
        correlation::annotate_significance(r, p)
    }

    /// Document embeddings of one encoder.
    #[pyclass(frozen)]
    struct EmbeddingTable {
        inner: embedding::EmbeddingTable,
    }

    #[pymethods]
    impl EmbeddingTable {
        /// Loads a `.tdeb` or `.jsonl` table.
        #[staticmethod]
        #[pyo3(signature = (path, encoder_id = None))]
        fn load(path: PathBuf, encoder_id: Option<&str>) -> PyResult<Self> {
            let inner = match encoder_id {
                Some(id) => embedding::load_embedding_table_as(&path, id),
                None => embedding::load_embedding_table(&path),
            }
            .map_err(|e| PyOSError::new_err(e.to_string()))?;
            Ok(Self { inner })
        }

        #[getter]
        fn encoder_id(&self) -> &str {
            self.inner.encoder_id()
        }

        #[getter]
        fn dim(&self) -> usize {
            self.inner.dim()
        }

        fn __len__(&self) -> usize {
            self.inner.len()
        }

        fn ids(&self) -> Vec<String> {
            self.inner.ids().to_vec()
        }

        fn get(&self, id: &str) -> Option<Vec<f64>> {
            self.inner.get(id).map(<[f64]>::to_vec)
        }

        /// Similarity of the average vectors of two id lists.
        fn similarity(&self, ids_a: Vec<String>, ids_b: Vec<String>, measure: &str) -> PyResult<f64> {
            let ua = drift::domain_avg_embedding(&ids_a, &self.inner).map_err(value_err)?;
            let ub = drift::domain_avg_embedding(&ids_b, &self.inner).map_err(value_err)?;
            drift::vector_similarity(&ua, &ub, parse_measure(measure)?).map_err(value_err)
        }
    }

    /// Loads a corpus file as a list of dicts with keys id, text, timestamp,
    /// domain.
    #[pyfunction]
    #[pyo3(signature = (path, format = None))]
    fn load_corpus(path: PathBuf, format: Option<&str>) -> PyResult<Vec<BTreeMap<&'static str, Option<String>>>> {
        let fmt = match format {
            Some(name) => CorpusFormat::parse(name),
            None => CorpusFormat::from_path(&path),
        }
        .map_err(value_err)?;
        let c = corpus::load_corpus(&path, fmt).map_err(|e| PyOSError::new_err(e.to_string()))?;
        Ok(c.documents()
            .iter()
            .map(|d| {
                BTreeMap::from([
                    ("id", Some(d.id.clone())),
                    ("text", Some(d.text.clone())),
                    ("timestamp", d.timestamp.map(|t| t.to_string())),
                    ("domain", d.domain_label.clone()),
                ])
            })
            .collect())
    }

    /// Runs one stage (or "all") and returns the relative paths written.
    #[pyfunction]
    #[pyo3(signature = (config, stage = "all", seed = None, out = None, threads = None, drift_split = None, correlate_with = None, strict = false))]
    #[allow(clippy::too_many_arguments)]
    fn run_pipeline(
        py: Python<'_>,
        config: PathBuf,
        stage: &str,
        seed: Option<u64>,
        out: Option<PathBuf>,
        threads: Option<usize>,
        drift_split: Option<&str>,
        correlate_with: Option<&str>,
        strict: bool,
    ) -> PyResult<Vec<String>> {
        let stage = match stage {
            "ingest" => Stage::Ingest,
            "segment" => Stage::Segment,
            "drift" => Stage::Drift,
            "perf" => Stage::Perf,
            "correlate" => Stage::Correlate,
            "report" => Stage::Report,
            "all" => Stage::All,
            other => return Err(value_err(format!("unknown stage {other:?}"))),
        };
        let overrides = Overrides {
            master_seed: seed,
            output_dir: out,
            drift_split: drift_split.map(str::parse::<DriftSplit>).transpose().map_err(value_err)?,
            correlate_with: correlate_with.map(str::parse::<CorrelateWith>).transpose().map_err(value_err)?,
            strict,
        };
        let summary = py
            .detach(|| pipeline::run_pipeline(&config, &overrides, stage, threads))
            .map_err(|e| PyOSError::new_err(e.to_string()))?;
        Ok(summary.files.into_iter().map(|f| f.path).collect())
    }
}
