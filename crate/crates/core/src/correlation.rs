//! Pearson correlation between drift values and performance changes.
//!
//! Drift is symmetric in the domain pair while performance change is not, so
//! the value for `{i, j}` is paired with both the `i -> j` and `j -> i` deltas.
//! In-domain pairs never enter the grid.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::drift::{DriftMeasurement, MetricSpec};
use crate::perf::PerformanceChange;
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("no drift value of {metric} for domains {source_label} and {target_label}")]
    MissingDrift { metric: String, source_label: String, target_label: String },
    #[error("performance changes span several datasets ({0}); select one")]
    MultipleDatasets(String),
    #[error("no performance changes to correlate")]
    NoChanges,
    #[error("no drift metrics to correlate")]
    NoMetrics,
    #[error("{metric} vs {perf_metric}: {source}")]
    Stats { metric: String, perf_metric: String, source: StatsError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub drift_metric: MetricSpec,
    pub perf_metric: String,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub stars: &'static str,
}

/// Cells in row-major order: one row per drift metric, one column per perf metric.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    pub rows: Vec<MetricSpec>,
    pub columns: Vec<String>,
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationGrid {
    pub fn get(&self, row: usize, col: usize) -> &CorrelationCell {
        &self.cells[row * self.columns.len() + col]
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < stats::ALPHA {
        "*"
    } else {
        ""
    }
}

/// `r` to two decimals without the leading zero, followed by its stars:
/// `(0.68, 0.03)` renders as `.68*`.
pub fn annotate_significance(r: f64, p: f64) -> String {
    let mut text = format!("{r:.2}");
    if text == "-0.00" {
        text = "0.00".into();
    }
    let text = match text.strip_prefix("-0.") {
        Some(rest) => format!("-.{rest}"),
        None => match text.strip_prefix("0.") {
            Some(rest) => format!(".{rest}"),
            None => text,
        },
    };
    format!("{text}{}", stars(p))
}

/// Word-level metrics first, then embedding metrics grouped by encoder in
/// order of first appearance.
pub fn table_order(metrics: &[MetricSpec]) -> Vec<MetricSpec> {
    let mut encoders: Vec<&str> = Vec::new();
    for m in metrics {
        if let Some(enc) = m.encoder_id() {
            if !encoders.contains(&enc) {
                encoders.push(enc);
            }
        }
    }
    let rank = |m: &MetricSpec| match m {
        MetricSpec::Jaccard => (0, 0, None),
        MetricSpec::TfIdfCosine => (1, 0, None),
        MetricSpec::Embedding { encoder_id, measure } => {
            (2, encoders.iter().position(|e| e == encoder_id).unwrap_or(usize::MAX), Some(*measure))
        }
    };
    let mut out: Vec<MetricSpec> = Vec::new();
    for m in metrics {
        if !out.contains(m) {
            out.push(m.clone());
        }
    }
    out.sort_by_key(|m| rank(m));
    out
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Correlates each requested drift metric against each perf metric found
/// in `changes`. All changes must come from one dataset.
pub fn build_correlation_table(
    drift: &[DriftMeasurement],
    changes: &[PerformanceChange],
    metrics: &[MetricSpec],
) -> Result<CorrelationGrid, CorrelationError> {
    if changes.is_empty() {
        return Err(CorrelationError::NoChanges);
    }
    if metrics.is_empty() {
        return Err(CorrelationError::NoMetrics);
    }
    let datasets: BTreeSet<&str> = changes.iter().map(|c| c.dataset.as_str()).collect();
    if datasets.len() > 1 {
        return Err(CorrelationError::MultipleDatasets(datasets.into_iter().collect::<Vec<_>>().join(", ")));
    }

    let mut values: BTreeMap<(&MetricSpec, (String, String)), f64> = BTreeMap::new();
    for d in drift {
        values.insert((&d.metric, pair_key(&d.source_label, &d.target_label)), d.value);
    }

    let rows = table_order(metrics);
    let columns: Vec<String> = changes
        .iter()
        .map(|c| c.perf_metric.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut cells = Vec::with_capacity(rows.len() * columns.len());
    for metric in &rows {
        for perf_metric in &columns {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for c in changes.iter().filter(|c| &c.perf_metric == perf_metric) {
                if c.source_label == c.target_label {
                    continue;
                }
                let x = values
                    .get(&(metric, pair_key(&c.source_label, &c.target_label)))
                    .ok_or_else(|| CorrelationError::MissingDrift {
                        metric: metric.to_string(),
                        source_label: c.source_label.clone(),
                        target_label: c.target_label.clone(),
                    })?;
                xs.push(*x);
                ys.push(c.delta);
            }
            let corr = stats::pearson_correlation(&xs, &ys).map_err(|source| CorrelationError::Stats {
                metric: metric.to_string(),
                perf_metric: perf_metric.clone(),
                source,
            })?;
            cells.push(CorrelationCell {
                drift_metric: metric.clone(),
                perf_metric: perf_metric.clone(),
                r: corr.r,
                p_value: corr.p_value,
                n: xs.len(),
                stars: stars(corr.p_value),
            });
        }
    }
    Ok(CorrelationGrid { rows, columns, cells })
}
