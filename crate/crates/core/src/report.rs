//! Heatmaps, matrix CSVs and correlation tables.
//!
//! Every renderer returns a `String`; callers decide where the bytes go.
//! Floats in CSV output use Rust's shortest round-trip formatting so that
//! reading a file back yields bit-identical values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{annotate_significance, CorrelationGrid};
use crate::drift::Kind;
use crate::perf::PerformanceChange;
use crate::stats::TestResult;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("matrix is {rows}x{cols} but has {row_labels} row and {col_labels} column labels")]
    Shape { rows: usize, cols: usize, row_labels: usize, col_labels: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: String, col: String },
    #[error("nothing to render: {0}")]
    Empty(&'static str),
    #[error("matrix csv line {line}: {message}")]
    Malformed { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Similarity,
    Distance,
    Delta,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Similarity => "similarity",
            ValueKind::Distance => "distance",
            ValueKind::Delta => "delta",
        }
    }
}

impl From<Kind> for ValueKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Similarity => ValueKind::Similarity,
            Kind::Distance => ValueKind::Distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixView {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub value_kind: ValueKind,
    pub mask: Option<Vec<Vec<bool>>>,
}

impl MatrixView {
    pub fn check(&self) -> Result<(), ReportError> {
        let shape = || ReportError::Shape {
            rows: self.values.len(),
            cols: self.values.first().map_or(0, Vec::len),
            row_labels: self.row_labels.len(),
            col_labels: self.col_labels.len(),
        };
        if self.values.len() != self.row_labels.len()
            || self.values.iter().any(|row| row.len() != self.col_labels.len())
        {
            return Err(shape());
        }
        if let Some(mask) = &self.mask {
            if mask.len() != self.values.len() || mask.iter().any(|row| row.len() != self.col_labels.len()) {
                return Err(shape());
            }
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<(), ReportError> {
        for (r, row) in self.values.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ReportError::NonFinite {
                        row: self.row_labels[r].clone(),
                        col: self.col_labels[c].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn masked(&self, r: usize, c: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[r][c])
    }
}

// ============================================================================
// SVG
// ============================================================================

const LIGHT: [f64; 3] = [247.0, 251.0, 255.0];
const DARK: [f64; 3] = [8.0, 48.0, 107.0];
const CELL: usize = 72;
const MARGIN: usize = 60;

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Shade in `[0, 1]`, 1 being darkest. Low similarity and high distance are
/// light, so lighter always means more drift; for deltas lighter means a
/// larger drop in performance.
fn shade(value: f64, min: f64, max: f64, kind: ValueKind) -> f64 {
    if max <= min {
        return 0.5;
    }
    let t = (value - min) / (max - min);
    match kind {
        ValueKind::Similarity | ValueKind::Delta => t,
        ValueKind::Distance => 1.0 - t,
    }
}

fn color(shade: f64) -> String {
    let c: Vec<u8> = (0..3).map(|i| (LIGHT[i] + (DARK[i] - LIGHT[i]) * shade).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn render_heatmap_svg(view: &MatrixView) -> Result<String, ReportError> {
    view.check()?;
    view.check_finite()?;
    if view.values.is_empty() || view.col_labels.is_empty() {
        return Err(ReportError::Empty("empty matrix"));
    }
    let all = view.values.iter().flatten().copied();
    let (min, max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (rows, cols) = (view.row_labels.len(), view.col_labels.len());
    let width = MARGIN + cols * CELL + 10;
    let height = MARGIN + rows * CELL + 30;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, "<title>{} ({})</title>", escape_xml(&view.title), view.value_kind.as_str());
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-size="14">{} ({})</text>"#,
        escape_xml(&view.title),
        view.value_kind.as_str()
    );
    for (c, label) in view.col_labels.iter().enumerate() {
        let x = MARGIN + c * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{x}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, MARGIN - 8, escape_xml(label));
    }
    for (r, label) in view.row_labels.iter().enumerate() {
        let y = MARGIN + r * CELL + CELL / 2 + 4;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" font-size="12" text-anchor="end">{}</text>"#, MARGIN - 8, escape_xml(label));
        for c in 0..cols {
            let v = view.values[r][c];
            let sh = shade(v, min, max, view.value_kind);
            let (x, y0) = (MARGIN + c * CELL, MARGIN + r * CELL);
            let ink = if sh > 0.55 { "#ffffff" } else { "#000000" };
            let star = if view.masked(r, c) { "*" } else { "" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y0}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ffffff"/>"##,
                color(sh)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" fill="{ink}">{v:.3}{star}</text>"#,
                x + CELL / 2,
                y0 + CELL / 2 + 4
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="11">scale: {min:.3} to {max:.3}</text>"#,
        MARGIN + rows * CELL + 20
    );
    s.push_str("</svg>\n");
    Ok(s)
}

// ============================================================================
// Matrix CSV
// ============================================================================

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn header(view: &MatrixView) -> Vec<String> {
    std::iter::once(String::new()).chain(view.col_labels.iter().cloned()).collect()
}

/// Header `,T1,T2,...`, then one row per row label.
pub fn matrix_csv(view: &MatrixView) -> Result<String, ReportError> {
    view.check()?;
    let rows = view.row_labels.iter().zip(&view.values).map(|(label, values)| {
        std::iter::once(label.clone()).chain(values.iter().map(|v| v.to_string())).collect()
    });
    Ok(csv_string(std::iter::once(header(view)).chain(rows)))
}

/// Companion of [`matrix_csv`] holding the star mask as `true`/`false`.
pub fn mask_csv(view: &MatrixView) -> Result<Option<String>, ReportError> {
    view.check()?;
    let Some(mask) = &view.mask else { return Ok(None) };
    let rows = view.row_labels.iter().zip(mask).map(|(label, flags)| {
        std::iter::once(label.clone()).chain(flags.iter().map(|b| b.to_string())).collect()
    });
    Ok(Some(csv_string(std::iter::once(header(view)).chain(rows))))
}

/// Parses [`matrix_csv`] output into `(row_labels, col_labels, values)`.
/// Row labels, column labels and values.
pub type LabeledMatrix = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

pub fn read_matrix_csv(text: &str) -> Result<LabeledMatrix, ReportError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = reader.records();
    let malformed = |line: u64, message: String| ReportError::Malformed { line, message };
    let head = records
        .next()
        .ok_or_else(|| malformed(1, "missing header".into()))?
        .map_err(|e| malformed(1, e.to_string()))?;
    let col_labels: Vec<String> = head.iter().skip(1).map(String::from).collect();
    let (mut row_labels, mut values) = (Vec::new(), Vec::new());
    for (n, rec) in records.enumerate() {
        let line = n as u64 + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        let mut fields = rec.iter();
        row_labels.push(fields.next().unwrap_or_default().to_string());
        let row = fields
            .map(|f| f.parse::<f64>().map_err(|e| malformed(line, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        values.push(row);
    }
    Ok((row_labels, col_labels, values))
}

// ============================================================================
// Tables
// ============================================================================

/// Rows are drift metrics, columns perf metrics; each cell as `.68*`.
pub fn render_correlation_markdown(grid: &CorrelationGrid) -> Result<String, ReportError> {
    if grid.columns.is_empty() {
        return Err(ReportError::Empty("no performance metrics"));
    }
    if grid.rows.is_empty() {
        return Err(ReportError::Empty("no drift metrics"));
    }
    let mut s = String::from("| Drift metric |");
    for c in &grid.columns {
        let _ = write!(s, " {c} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(grid.columns.len()));
    s.push('\n');
    for (r, metric) in grid.rows.iter().enumerate() {
        let _ = write!(s, "| {} |", metric.display_name());
        for c in 0..grid.columns.len() {
            let cell = grid.get(r, c);
            let _ = write!(s, " {} |", annotate_significance(cell.r, cell.p_value));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn correlation_csv(grid: &CorrelationGrid) -> String {
    let head = ["drift_family", "encoder_id", "measure", "perf_metric", "r", "p", "n", "stars"];
    let rows = grid.cells.iter().map(|c| {
        vec![
            c.drift_metric.family().to_string(),
            c.drift_metric.encoder_id().unwrap_or_default().to_string(),
            c.drift_metric.measure().map(|m| m.as_str()).unwrap_or_default().to_string(),
            c.perf_metric.clone(),
            c.r.to_string(),
            c.p_value.to_string(),
            c.n.to_string(),
            c.stars.to_string(),
        ]
    });
    csv_string(std::iter::once(head.iter().map(|s| s.to_string()).collect()).chain(rows))
}

/// Per-pair performance changes with their tests; run deltas joined by `;`.
pub fn deltas_csv(changes: &[(PerformanceChange, TestResult)]) -> String {
    let head = ["source", "target", "delta", "t", "df", "p", "significant", "zero_variance", "run_deltas"];
    let rows = changes.iter().map(|(c, t)| {
        vec![
            c.source_label.clone(),
            c.target_label.clone(),
            c.delta.to_string(),
            t.statistic.to_string(),
            t.df.to_string(),
            t.p_value.to_string(),
            t.significant.to_string(),
            t.zero_variance.to_string(),
            c.run_deltas.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        ]
    });
    csv_string(std::iter::once(head.iter().map(|s| s.to_string()).collect()).chain(rows))
}

/// Lowercase file-name fragment: characters other than ASCII alphanumerics,
/// `-` and `_` become `_`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::CorrelationCell;
    use crate::drift::MetricSpec;
    use proptest::prelude::*;

    fn labels(k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("T{i}")).collect()
    }

    fn view(values: Vec<Vec<f64>>, kind: ValueKind) -> MatrixView {
        let k = values.len();
        MatrixView {
            title: "Jaccard Similarity".into(),
            row_labels: labels(k),
            col_labels: labels(k),
            values,
            value_kind: kind,
            mask: None,
        }
    }

    fn fills(svg: &str) -> Vec<String> {
        svg.lines()
            .filter(|l| l.starts_with("<rect"))
            .map(|l| l.split("fill=\"").nth(1).unwrap()[..7].to_string())
            .collect()
    }

    fn texts(svg: &str) -> Vec<String> {
        let doc = roxmltree::Document::parse(svg).unwrap();
        doc.descendants()
            .filter(|n| n.has_tag_name("text") && n.attribute("fill").is_some())
            .filter_map(|n| n.text().map(String::from))
            .collect()
    }

    #[test]
    fn svg_is_well_formed() {
        let mut v = view(vec![vec![1.0, 0.25], vec![0.25, 1.0]], ValueKind::Similarity);
        v.title = "a < b & \"c\"".into();
        let svg = render_heatmap_svg(&v).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("rect")).count(), 4);
        assert!(svg.contains("(similarity)"));
    }

    #[test]
    fn constant_matrix_has_one_color() {
        let svg = render_heatmap_svg(&view(vec![vec![0.4; 3]; 3], ValueKind::Similarity)).unwrap();
        let f = fills(&svg);
        assert!(f.iter().all(|c| c == &f[0]));
    }

    #[test]
    fn identity_diagonal_is_darkest() {
        let mut values = vec![vec![0.2; 4]; 4];
        for (i, row) in values.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let f = fills(&render_heatmap_svg(&view(values, ValueKind::Similarity)).unwrap());
        assert_eq!(f[0], color(1.0));
        assert_eq!(f[5], color(1.0));
        assert_eq!(f[1], color(0.0));
        // Distances invert the scale: the zero diagonal is the darkest.
        let mut d = vec![vec![3.0; 2]; 2];
        d[0][0] = 0.0;
        d[1][1] = 0.0;
        let f = fills(&render_heatmap_svg(&view(d, ValueKind::Distance)).unwrap());
        assert_eq!(f[0], color(1.0));
        assert_eq!(f[1], color(0.0));
    }

    #[test]
    fn symmetric_text_and_stars() {
        let mut v = view(vec![vec![1.0, 0.12345], vec![0.12345, 1.0]], ValueKind::Delta);
        v.mask = Some(vec![vec![false, true], vec![false, false]]);
        let t = texts(&render_heatmap_svg(&v).unwrap());
        assert_eq!(t, ["1.000", "0.123*", "0.123", "1.000"]);
    }

    #[test]
    fn non_finite_rejected() {
        let v = view(vec![vec![1.0, f64::NAN], vec![0.0, 1.0]], ValueKind::Similarity);
        assert!(matches!(render_heatmap_svg(&v), Err(ReportError::NonFinite { .. })));
        let mut bad = view(vec![vec![1.0]], ValueKind::Similarity);
        bad.col_labels.push("T2".into());
        assert!(matches!(matrix_csv(&bad), Err(ReportError::Shape { .. })));
    }

    #[test]
    fn matrix_csv_header_and_mask() {
        let mut v = view(vec![vec![0.1; 4]; 4], ValueKind::Delta);
        let csv = matrix_csv(&v).unwrap();
        assert!(csv.starts_with("\"\",T1,T2,T3,T4\n") || csv.starts_with(",T1,T2,T3,T4\n"), "{csv}");
        assert_eq!(mask_csv(&v).unwrap(), None);
        v.mask = Some(vec![vec![true, false, false, false]; 4]);
        let m = mask_csv(&v).unwrap().unwrap();
        assert!(m.lines().nth(1).unwrap() == "T1,true,false,false,false");
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 16)) {
            let values: Vec<Vec<f64>> = vals.chunks(4).map(<[f64]>::to_vec).collect();
            let v = view(values.clone(), ValueKind::Distance);
            let (rows, cols, back) = read_matrix_csv(&matrix_csv(&v).unwrap()).unwrap();
            prop_assert_eq!(rows, labels(4));
            prop_assert_eq!(cols, labels(4));
            for (a, b) in back.iter().flatten().zip(values.iter().flatten()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    fn grid(columns: Vec<String>) -> CorrelationGrid {
        let rows = vec![MetricSpec::Jaccard, "embedding/USE/euclidean".parse().unwrap()];
        let mut cells = Vec::new();
        for (r, m) in rows.iter().enumerate() {
            for c in &columns {
                let (rv, p) = if r == 0 { (0.68, 0.03) } else { (-0.74, 0.01) };
                cells.push(CorrelationCell {
                    drift_metric: m.clone(),
                    perf_metric: c.clone(),
                    r: rv,
                    p_value: p,
                    n: 12,
                    stars: crate::correlation::stars(p),
                });
            }
        }
        CorrelationGrid { rows, columns, cells }
    }

    #[test]
    fn markdown_layout() {
        let md = render_correlation_markdown(&grid(vec!["F1".into()])).unwrap();
        assert_eq!(
            md,
            "| Drift metric | F1 |\n|---|---:|\n| Jaccard Similarity | .68* |\n| USE-Euclidean | -.74* |\n"
        );
        assert!(matches!(render_correlation_markdown(&grid(vec![])), Err(ReportError::Empty(_))));
    }

    #[test]
    fn correlation_csv_columns() {
        let csv = correlation_csv(&grid(vec!["F1".into()]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "drift_family,encoder_id,measure,perf_metric,r,p,n,stars");
        assert_eq!(lines[1], "jaccard,,,F1,0.68,0.03,12,*");
        assert_eq!(lines[2], "embedding,USE,euclidean,F1,-0.74,0.01,12,*");
    }

    #[test]
    fn stems() {
        assert_eq!(file_stem("Rouge L/x"), "Rouge_L_x");
    }
}
