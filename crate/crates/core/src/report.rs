//! Deterministic file emission from an analysis snapshot.
//!
//! Every file is a pure function of the snapshot: no timestamps, stable
//! ordering, shortest-roundtrip float formatting. Re-running emission over
//! the same snapshot rewrites identical bytes. CSV headers are versioned via
//! a leading `# schema <name>` comment line; any column change requires a
//! version bump. Each CSV has a JSON mirror with identical row content.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::KvDocument;
use crate::pipeline::AnalysisSnapshot;
use crate::similarity::SprMatrix;
use crate::sweep::SeriesKind;

pub const MATRIX_SCHEMA: &str = "matrix-v1";
pub const MATRIX_FULL_SCHEMA: &str = "matrix-full-v1";
pub const SWEEP_SCHEMA: &str = "sweep-v1";
pub const SPREAD_SCHEMA: &str = "spread-v1";
pub const RELATIVE_SCHEMA: &str = "relative-v1";
pub const STATS_SCHEMA: &str = "stats-v1";
pub const CONVERGENCE_SCHEMA: &str = "convergence-v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_mirror<T: Serialize>(
    schema: &str,
    rows: &[T],
    notes: &[String],
) -> Result<String, ReportError> {
    #[derive(Serialize)]
    struct Mirror<'a, T> {
        schema: &'a str,
        rows: &'a [T],
        #[serde(skip_serializing_if = "<[String]>::is_empty")]
        notes: &'a [String],
    }
    let mut body = serde_json::to_string_pretty(&Mirror {
        schema,
        rows,
        notes,
    })?;
    body.push('\n');
    Ok(body)
}

/// Display matrix in the canonical layout (original, paraphrase groups in
/// order, control), cells rounded to two decimals, plus a full-precision
/// long-format sidecar carrying the sample counts.
pub fn emit_matrix_csv(matrix: &SprMatrix, dir: &Path) -> Result<(PathBuf, PathBuf), ReportError> {
    let stem = format!(
        "{}_t{}_l{:02}",
        matrix.model, matrix.temperature, matrix.pattern_len
    );
    let display_path = dir.join(format!("{stem}.csv"));
    let full_path = dir.join(format!("{stem}.full.csv"));

    let mut display = format!("# schema {MATRIX_SCHEMA}\n");
    display.push_str("group");
    for label in &matrix.labels {
        let _ = write!(display, ",{label}");
    }
    display.push('\n');
    for (row_label, row) in matrix.labels.iter().zip(&matrix.cells) {
        let _ = write!(display, "{row_label}");
        for cell in row {
            let _ = write!(display, ",{:.2}", cell.mean);
        }
        display.push('\n');
    }
    write_file(&display_path, &display)?;

    let mut full = format!("# schema {MATRIX_FULL_SCHEMA}\nrow,col,mean,samples\n");
    for (row_label, row) in matrix.labels.iter().zip(&matrix.cells) {
        for (col_label, cell) in matrix.labels.iter().zip(row) {
            let _ = writeln!(full, "{row_label},{col_label},{},{}", cell.mean, cell.samples);
        }
    }
    write_file(&full_path, &full)?;
    Ok((display_path, full_path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub temperature: u8,
    pub l: usize,
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadRow {
    pub model: String,
    pub l: usize,
    pub delta: f64,
    pub mean_t0: f64,
    pub mean_t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRow {
    pub base: String,
    pub model: String,
    pub temperature: u8,
    pub l: usize,
    pub ratio: Option<f64>,
    pub defined: bool,
    pub log_scale_recommended: bool,
}

fn sweep_rows(snapshot: &AnalysisSnapshot) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for series in &snapshot.series {
        for point in &series.points {
            rows.push(SweepRow {
                model: series.model.clone(),
                temperature: series.temperature.into(),
                l: point.pattern_len,
                mean: point.mean,
                std: point.std,
                samples: point.samples,
                kind: match series.kind {
                    SeriesKind::Model => "model".into(),
                    SeriesKind::HumanBaseline => "human-baseline".into(),
                },
            });
        }
    }
    rows
}

fn spread_rows(snapshot: &AnalysisSnapshot) -> Vec<SpreadRow> {
    let mut rows = Vec::new();
    for spread in &snapshot.spreads {
        for point in &spread.points {
            rows.push(SpreadRow {
                model: spread.model.clone(),
                l: point.pattern_len,
                delta: point.delta,
                mean_t0: point.mean_t0,
                mean_t1: point.mean_t1,
            });
        }
    }
    rows
}

fn relative_rows(snapshot: &AnalysisSnapshot) -> Vec<RelativeRow> {
    let mut rows = Vec::new();
    for relative in &snapshot.relatives {
        for entry in &relative.entries {
            rows.push(RelativeRow {
                base: relative.base_model.clone(),
                model: entry.model.clone(),
                temperature: relative.temperature.into(),
                l: entry.pattern_len,
                ratio: entry.ratio,
                defined: entry.ratio.is_some(),
                log_scale_recommended: true,
            });
        }
    }
    rows
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Emit every report file for the snapshot under `out`. Returns the paths
/// written, in a fixed order.
pub fn emit_all(snapshot: &AnalysisSnapshot, out: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();

    let matrices_dir = out.join("matrices");
    for matrix in &snapshot.matrices {
        let (display, full) = emit_matrix_csv(matrix, &matrices_dir)?;
        written.push(display);
        written.push(full);
    }

    let series_dir = out.join("series");
    let sweep = sweep_rows(snapshot);
    let mut csv = format!("# schema {SWEEP_SCHEMA}\nmodel,temperature,l,mean,std,samples,kind\n");
    for row in &sweep {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.model, row.temperature, row.l, row.mean, row.std, row.samples, row.kind
        );
    }
    let path = series_dir.join("sweep.csv");
    write_file(&path, &csv)?;
    written.push(path);
    let path = series_dir.join("sweep.json");
    write_file(&path, &json_mirror(SWEEP_SCHEMA, &sweep, &[])?)?;
    written.push(path);

    let spreads = spread_rows(snapshot);
    let mut csv = format!("# schema {SPREAD_SCHEMA}\nmodel,l,delta,mean_t0,mean_t1\n");
    for row in &spreads {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.model, row.l, row.delta, row.mean_t0, row.mean_t1
        );
    }
    let path = series_dir.join("spread.csv");
    write_file(&path, &csv)?;
    written.push(path);
    let path = series_dir.join("spread.json");
    write_file(&path, &json_mirror(SPREAD_SCHEMA, &spreads, &snapshot.notes)?)?;
    written.push(path);

    let relatives = relative_rows(snapshot);
    let mut csv = format!(
        "# schema {RELATIVE_SCHEMA}\nbase,model,temperature,l,ratio,defined,log_scale_recommended\n"
    );
    for row in &relatives {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.base,
            row.model,
            row.temperature,
            row.l,
            fmt_opt(row.ratio),
            row.defined,
            row.log_scale_recommended
        );
    }
    let path = series_dir.join("relative.csv");
    write_file(&path, &csv)?;
    written.push(path);
    let path = series_dir.join("relative.json");
    write_file(&path, &json_mirror(RELATIVE_SCHEMA, &relatives, &[])?)?;
    written.push(path);

    let mut csv = format!("# schema {STATS_SCHEMA}\nlabel,count,min,median,mean,max\n");
    for row in &snapshot.stats.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.label, row.count, row.min, row.median, row.mean, row.max
        );
    }
    let path = out.join("corpus_stats.csv");
    write_file(&path, &csv)?;
    written.push(path);
    let path = out.join("corpus_stats.json");
    write_file(&path, &json_mirror(STATS_SCHEMA, &snapshot.stats.rows, &[])?)?;
    written.push(path);

    #[derive(Serialize)]
    struct ConvergenceFile<'a> {
        schema: &'a str,
        #[serde(flatten)]
        report: &'a crate::sweep::ConvergenceReport,
    }
    let mut body = serde_json::to_string_pretty(&ConvergenceFile {
        schema: CONVERGENCE_SCHEMA,
        report: &snapshot.convergence,
    })?;
    body.push('\n');
    let path = out.join("convergence.json");
    write_file(&path, &body)?;
    written.push(path);

    let path = out.join("run_meta.kv");
    write_file(&path, &run_meta(snapshot))?;
    written.push(path);

    Ok(written)
}

fn run_meta(snapshot: &AnalysisSnapshot) -> String {
    let mut doc = KvDocument::new();
    doc.set("meta", "snapshot-schema", snapshot.schema_version.to_string());
    doc.set("meta", "engine", format!("{:?}", snapshot.engine));
    doc.set("meta", "dataset-checksum", snapshot.dataset_checksum.clone());
    if let Some(checksum) = &snapshot.store_manifest_checksum {
        doc.set("meta", "store-manifest-checksum", checksum.clone());
    }
    doc.set("meta", "models", snapshot.models.join(","));
    doc.set(
        "meta",
        "temperatures",
        snapshot
            .temperatures
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    doc.set("meta", "l-min", snapshot.l_min.to_string());
    doc.set("meta", "l-max", snapshot.l_max.to_string());
    doc.set("meta", "selector", format!("{:?}", snapshot.selector));
    if let Some(base) = &snapshot.base_model {
        doc.set("meta", "base-model", base.clone());
    }
    doc.set(
        "meta",
        "flatness-tolerance",
        snapshot.flatness_tolerance.to_string(),
    );
    doc.set("schemas", "matrix", MATRIX_SCHEMA);
    doc.set("schemas", "matrix-full", MATRIX_FULL_SCHEMA);
    doc.set("schemas", "sweep", SWEEP_SCHEMA);
    doc.set("schemas", "spread", SPREAD_SCHEMA);
    doc.set("schemas", "relative", RELATIVE_SCHEMA);
    doc.set("schemas", "stats", STATS_SCHEMA);
    doc.set("schemas", "convergence", CONVERGENCE_SCHEMA);
    for (i, note) in snapshot.notes.iter().enumerate() {
        doc.set("notes", &format!("note-{}", i + 1), note.clone());
    }
    for (i, dropped) in snapshot.dropped.iter().enumerate() {
        doc.set(
            "dropped",
            &format!("dropped-{}", i + 1),
            format!(
                "{} t={} {}: {}",
                dropped.model, dropped.temperature, dropped.chapter, dropped.reason
            ),
        );
    }
    doc.render()
}
