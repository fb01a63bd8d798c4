//! Paired-dataset ingestion, paraphrase record storage and descriptive
//! statistics.
//!
//! The dataset on disk is a directory of per-chapter text files plus an index
//! file with one record per line:
//!
//! ```text
//! chapter_key<TAB>primary_relpath<TAB>control_relpath
//! ```
//!
//! Paths are resolved against the index file's directory. Either path field
//! may be empty, which marks the chapter as present in only one guide and
//! excludes it as unpaired.

pub mod models;
pub mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::similarity::Temperature;
use crate::text::{normalize_and_tokenize, TokenizationPolicy};

pub use models::{ModelRegistry, ModelSpec};
pub use store::{
    expected_cells, CellKey, CellStatus, ParaphraseRecord, RecordStore, RunManifest, SourceCorpus,
    STORE_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    SourceUnreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    StoreUnwritable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("duplicate chapter key {key:?} in the index")]
    DuplicateChapterKey { key: String },
    #[error("index line {line} is malformed (expected key<TAB>primary<TAB>control)")]
    MalformedIndex { line: usize },
    #[error("record store is corrupt: {reason}")]
    StoreCorrupt { reason: String },
    #[error("store manifest line {line} in {path} is malformed")]
    MalformedManifest { path: PathBuf, line: usize },
    #[error("model id {id:?} contains characters unsafe for store paths")]
    InvalidModelId { id: String },
    #[error("model id {id:?} is already registered")]
    DuplicateModelId { id: String },
    #[error("release order of {id} is inconsistent with release dates relative to {other}")]
    InconsistentReleaseOrder { id: String, other: String },
    #[error("unknown model {id:?}")]
    UnknownModel { id: String },
}

/// One chapter covered by both study guides, with the primary text inside the
/// word-count window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentPair {
    pub chapter: String,
    pub primary_text: String,
    pub control_text: String,
    pub primary_words: usize,
    pub control_words: usize,
}

/// Inclusive word-count window applied to the primary text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthFilter {
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for LengthFilter {
    fn default() -> Self {
        Self {
            min_words: 100,
            max_words: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    Unpaired,
    TooShort { words: usize },
    TooLong { words: usize },
    InvalidKey,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Unpaired => write!(f, "unpaired"),
            RejectReason::TooShort { words } => write!(f, "too short ({words} words)"),
            RejectReason::TooLong { words } => write!(f, "too long ({words} words)"),
            RejectReason::InvalidKey => write!(f, "invalid key"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedChapter {
    pub chapter: String,
    pub reason: RejectReason,
}

/// Result of ingestion: admitted pairs in chapter-key order plus the log of
/// rejected chapters.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub pairs: Vec<DocumentPair>,
    pub rejected: Vec<RejectedChapter>,
}

pub(crate) fn key_is_path_safe(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::SourceUnreadable {
        path: path.to_path_buf(),
        source,
    })
}

/// Ingest the paired corpus behind `index_path`.
///
/// Chapters are admitted when both guides cover them and the primary text's
/// word count (under `policy`) lies within `filter`. Output order is by
/// chapter key, so two ingests of the same data are identical.
pub fn ingest_paired_corpus(
    index_path: &Path,
    policy: TokenizationPolicy,
    filter: LengthFilter,
) -> Result<IngestReport, CorpusError> {
    let index_text = read_text(index_path)?;
    let base = index_path.parent().unwrap_or(Path::new("."));

    let mut rows: Vec<(String, String, String)> = Vec::new();
    for (idx, raw) in index_text.lines().enumerate() {
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedIndex { line: idx + 1 });
        }
        rows.push((
            fields[0].trim().to_string(),
            fields[1].trim().to_string(),
            fields[2].trim().to_string(),
        ));
    }

    let mut seen: Vec<&str> = Vec::new();
    for (key, _, _) in &rows {
        if seen.contains(&key.as_str()) {
            return Err(CorpusError::DuplicateChapterKey { key: key.clone() });
        }
        seen.push(key);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let mut pairs = Vec::new();
    let mut rejected = Vec::new();
    for (key, primary_rel, control_rel) in rows {
        if !key_is_path_safe(&key) {
            rejected.push(RejectedChapter {
                chapter: key,
                reason: RejectReason::InvalidKey,
            });
            continue;
        }
        if primary_rel.is_empty() || control_rel.is_empty() {
            rejected.push(RejectedChapter {
                chapter: key,
                reason: RejectReason::Unpaired,
            });
            continue;
        }
        let primary_text = read_text(&base.join(&primary_rel))?;
        let control_text = read_text(&base.join(&control_rel))?;
        let primary_words = normalize_and_tokenize(&primary_text, policy, key.as_str()).len();
        let control_words = normalize_and_tokenize(&control_text, policy, key.as_str()).len();
        if primary_words < filter.min_words {
            rejected.push(RejectedChapter {
                chapter: key,
                reason: RejectReason::TooShort {
                    words: primary_words,
                },
            });
            continue;
        }
        if primary_words > filter.max_words {
            rejected.push(RejectedChapter {
                chapter: key,
                reason: RejectReason::TooLong {
                    words: primary_words,
                },
            });
            continue;
        }
        pairs.push(DocumentPair {
            chapter: key,
            primary_text,
            control_text,
            primary_words,
            control_words,
        });
    }
    Ok(IngestReport { pairs, rejected })
}

/// Content checksum of the admitted corpus, stable across runs and platforms.
pub fn dataset_checksum(pairs: &[DocumentPair]) -> String {
    let mut hasher = Sha256::new();
    for pair in pairs {
        hasher.update(pair.chapter.as_bytes());
        hasher.update([0x1f]);
        hasher.update(Sha256::digest(pair.primary_text.as_bytes()));
        hasher.update(Sha256::digest(pair.control_text.as_bytes()));
    }
    hex_encode(&hasher.finalize())
}

pub(crate) fn hex_encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = fmt::Write::write_fmt(&mut out, format_args!("{b:02x}"));
    }
    out
}

/// Word-count distribution of one group of texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub label: String,
    pub count: usize,
    pub min: usize,
    pub median: f64,
    pub mean: f64,
    pub max: usize,
}

fn stats_row(label: String, mut counts: Vec<usize>) -> StatsRow {
    counts.sort_unstable();
    let n = counts.len();
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    StatsRow {
        label,
        count: n,
        min: counts[0],
        median,
        mean: counts.iter().sum::<usize>() as f64 / n as f64,
        max: counts[n - 1],
    }
}

/// Descriptive statistics table: originals, controls, then one row per
/// (model, temperature, paraphrase group).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub rows: Vec<StatsRow>,
}

pub fn corpus_stats(
    pairs: &[DocumentPair],
    records: &[ParaphraseRecord],
    policy: TokenizationPolicy,
) -> CorpusStats {
    let mut rows = Vec::new();
    if !pairs.is_empty() {
        rows.push(stats_row(
            "original".to_string(),
            pairs.iter().map(|p| p.primary_words).collect(),
        ));
        rows.push(stats_row(
            "control".to_string(),
            pairs.iter().map(|p| p.control_words).collect(),
        ));
    }

    let mut groups: BTreeMap<(String, Temperature, usize), Vec<usize>> = BTreeMap::new();
    for record in records {
        let words = normalize_and_tokenize(&record.text, policy, record.chapter.as_str()).len();
        groups
            .entry((record.model.clone(), record.temperature, record.round))
            .or_default()
            .push(words);
    }
    for ((model, temperature, round), counts) in groups {
        rows.push(stats_row(
            format!("{model} t={temperature} p={round:02}"),
            counts,
        ));
    }
    CorpusStats { rows }
}
