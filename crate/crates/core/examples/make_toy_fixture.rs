//! Regenerates the toy fixture under `tests/fixtures/toy/`.
//!
//! ```text
//! cargo run -p tempdrift-core --example make_toy_fixture [OUT_DIR]
//! ```
//!
//! Four domains of 200 synthetic documents, a handful of stray documents
//! dated after the last domain, 16-dimensional embeddings in TDEB, and a
//! score grid whose performance changes follow the embedding similarity.

use std::fs;
use std::path::PathBuf;

use serde_json::json;
use tempdrift_core::drift::{self, Measure};
use tempdrift_core::embedding;
use tempdrift_core::perf::PerformanceLedger;
use tempdrift_core::synth::{self, DriftingCorpus};

const SEED: u64 = 20240611;
const ENCODER: &str = "toy";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy"));
    fs::create_dir_all(&out)?;

    let spec = DriftingCorpus { stray_docs: 5, seed: SEED, ..DriftingCorpus::default() };
    let g = spec.generate(ENCODER);

    let mut corpus = String::new();
    for d in &g.documents {
        let mut rec = json!({
            "id": d.id,
            "text": d.text,
            "timestamp": d.timestamp.map(|t| t.to_string()),
        });
        if let Some(label) = &d.domain_label {
            rec["domain"] = json!(label);
        }
        corpus.push_str(&serde_json::to_string(&rec)?);
        corpus.push('\n');
    }
    fs::write(out.join("corpus.jsonl"), corpus)?;
    embedding::write_tdeb(&out.join("toy.tdeb"), &g.embeddings)?;

    // Domain-average cosine similarity drives the performance changes.
    let k = g.labels.len();
    let averages: Vec<Vec<f64>> = g
        .labels
        .iter()
        .map(|label| {
            let ids: Vec<&str> = g
                .documents
                .iter()
                .filter(|d| d.domain_label.as_deref() == Some(label))
                .map(|d| d.id.as_str())
                .collect();
            drift::domain_avg_embedding(&ids, &g.embeddings)
        })
        .collect::<Result<_, _>>()?;
    let mut sim = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            sim[i][j] = drift::vector_similarity(&averages[i], &averages[j], Measure::Cosine)?;
        }
    }
    let mut noise = tempdrift_core::rng::SplitMix64::new(SEED);
    let mut jitter = vec![vec![0.0; k]; k];
    for row in &mut jitter {
        for v in row.iter_mut() {
            *v = 0.01 * synth::normal(&mut noise);
        }
    }
    let mut records = synth::score_grid(
        "toy",
        "F1",
        &g.labels,
        |j| 0.82 - 0.01 * j as f64,
        |i, j| 0.6 * (sim[i][j] - 1.0) + jitter[i][j],
        5,
        0.01,
        SEED,
    );
    records.extend(synth::score_grid(
        "toy",
        "RougeL",
        &g.labels,
        |j| 0.55 + 0.005 * j as f64,
        |i, j| 0.3 * (sim[i][j] - 1.0) - 0.02 * (i as f64 - j as f64).abs() + jitter[j][i],
        5,
        0.015,
        SEED,
    ));
    fs::write(out.join("perf.csv"), PerformanceLedger::from_records(records)?.to_csv())?;

    let ranges: Vec<_> = g
        .labels
        .iter()
        .zip(&g.ranges)
        .map(|(label, (start, end))| json!({"label": label, "start": start.to_string(), "end": end.to_string()}))
        .collect();
    let config = json!({
        "corpus_path": "corpus.jsonl",
        "segmentation": {"date_ranges": ranges},
        "master_seed": 42,
        "metrics": ["jaccard", "tfidf_cosine", "embedding/toy/cosine", "embedding/toy/euclidean"],
        "embedding_paths": {ENCODER: "toy.tdeb"},
        "performance_path": "perf.csv",
        "output_dir": "out",
    });
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    println!("wrote fixture to {}", out.display());
    Ok(())
}
