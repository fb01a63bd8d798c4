//! The on-disk paraphrase record store.
//!
//! Layout: one directory per (model, temperature) under the store root,
//! holding one `<chapter>_round-<N>.txt` file per generated paraphrase plus a
//! `manifest` ledger. The manifest is append-only `key=value` sections with
//! last-entry-wins semantics, so resumed or retried cells simply append a
//! newer entry. Texts are content-addressed by SHA-256 in the manifest;
//! loading verifies every checksum.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{hex_encode, CorpusError};
use crate::config::KvDocument;
use crate::similarity::Temperature;
use crate::text::TokenizationPolicy;

pub const STORE_SCHEMA_VERSION: u32 = 1;

/// Which corpus the paraphrased text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceCorpus {
    Primary,
    Control,
}

impl fmt::Display for SourceCorpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceCorpus::Primary => "primary",
            SourceCorpus::Control => "control",
        })
    }
}

impl FromStr for SourceCorpus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "primary" => Ok(SourceCorpus::Primary),
            "control" => Ok(SourceCorpus::Control),
            other => Err(format!("unknown source corpus {other:?}")),
        }
    }
}

/// One generated paraphrase with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    pub chapter: String,
    pub source_corpus: SourceCorpus,
    pub model: String,
    pub temperature: Temperature,
    /// 1-based round index; round i of every chapter forms paraphrase group i.
    pub round: usize,
    pub text: String,
    pub requested_at_ms: u64,
    pub responded_at_ms: u64,
    /// SHA-256 of the exact prompt sent, proving the fixed template was used.
    pub prompt_fingerprint: String,
}

/// Identity of one campaign cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub temperature: Temperature,
    pub chapter: String,
    pub round: usize,
}

/// Ledger state of one campaign cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    Done,
    Failed(String),
    Skipped(String),
}

impl CellStatus {
    pub fn is_done(&self) -> bool {
        matches!(self, CellStatus::Done)
    }
}

/// Global manifest tying a record store to the dataset and configuration
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub dataset_checksum: String,
    pub models: Vec<String>,
    pub temperatures: Vec<Temperature>,
    pub rounds_t0: usize,
    pub rounds_t1: usize,
    pub l_min: usize,
    pub l_max: usize,
    pub policy: TokenizationPolicy,
}

impl RunManifest {
    pub fn to_kv(&self) -> KvDocument {
        let mut doc = KvDocument::new();
        doc.set("run", "schema-version", self.schema_version.to_string());
        doc.set("run", "dataset-checksum", self.dataset_checksum.clone());
        doc.set("run", "models", self.models.join(","));
        doc.set(
            "run",
            "temperatures",
            self.temperatures
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        doc.set("run", "rounds-t0", self.rounds_t0.to_string());
        doc.set("run", "rounds-t1", self.rounds_t1.to_string());
        doc.set("sweep", "l-min", self.l_min.to_string());
        doc.set("sweep", "l-max", self.l_max.to_string());
        doc.set("policy", "lowercase", self.policy.lowercase.to_string());
        doc.set(
            "policy",
            "strip-punctuation",
            self.policy.strip_punctuation.to_string(),
        );
        doc.set(
            "policy",
            "collapse-whitespace",
            self.policy.collapse_whitespace.to_string(),
        );
        doc
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self, CorpusError> {
        let get = |section: &str, key: &str| -> Result<&str, CorpusError> {
            doc.get(section, key).ok_or_else(|| CorpusError::StoreCorrupt {
                reason: format!("run manifest is missing [{section}] {key}"),
            })
        };
        let parse_num = |section: &str, key: &str| -> Result<usize, CorpusError> {
            get(section, key)?.parse().map_err(|_| CorpusError::StoreCorrupt {
                reason: format!("run manifest [{section}] {key} is not a number"),
            })
        };
        let parse_flag = |key: &str| -> Result<bool, CorpusError> {
            get("policy", key)?.parse().map_err(|_| CorpusError::StoreCorrupt {
                reason: format!("run manifest [policy] {key} is not a boolean"),
            })
        };
        let temperatures = get("run", "temperatures")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "0" => Ok(Temperature::Zero),
                "1" => Ok(Temperature::One),
                other => Err(CorpusError::StoreCorrupt {
                    reason: format!("run manifest temperature {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RunManifest {
            schema_version: parse_num("run", "schema-version")? as u32,
            dataset_checksum: get("run", "dataset-checksum")?.to_string(),
            models: get("run", "models")?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            temperatures,
            rounds_t0: parse_num("run", "rounds-t0")?,
            rounds_t1: parse_num("run", "rounds-t1")?,
            l_min: parse_num("sweep", "l-min")?,
            l_max: parse_num("sweep", "l-max")?,
            policy: TokenizationPolicy {
                lowercase: parse_flag("lowercase")?,
                strip_punctuation: parse_flag("strip-punctuation")?,
                collapse_whitespace: parse_flag("collapse-whitespace")?,
            },
        })
    }
}

/// Outcome of a full-store integrity pass.
#[derive(Debug, Clone, Default)]
pub struct StoreValidation {
    pub records_checked: usize,
    pub problems: Vec<String>,
}

impl StoreValidation {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Handle to a record store root directory.
#[derive(Debug, Clone)]
pub struct RecordStore {
    root: PathBuf,
}

fn record_file_name(chapter: &str, round: usize) -> String {
    format!("{chapter}_round-{round}.txt")
}

fn dir_name(model: &str, temperature: Temperature) -> String {
    format!("{model}_t{temperature}")
}

fn parse_dir_name(name: &str) -> Option<(String, Temperature)> {
    if let Some(model) = name.strip_suffix("_t0") {
        return Some((model.to_string(), Temperature::Zero));
    }
    name.strip_suffix("_t1")
        .map(|model| (model.to_string(), Temperature::One))
}

fn text_checksum(text: &str) -> String {
    hex_encode(&Sha256::digest(text.as_bytes()))
}

impl RecordStore {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn cell_dir(&self, model: &str, temperature: Temperature) -> PathBuf {
        self.root.join(dir_name(model, temperature))
    }

    fn append_manifest_entry(
        &self,
        dir: &Path,
        file_key: &str,
        entries: &[(&str, String)],
    ) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::StoreUnwritable {
            path: dir.to_path_buf(),
            source,
        })?;
        let manifest = dir.join("manifest");
        let mut body = format!("[record {file_key}]\n");
        for (key, value) in entries {
            body.push_str(&format!("{key}={value}\n"));
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest)
            .map_err(|source| CorpusError::StoreUnwritable {
                path: manifest.clone(),
                source,
            })?;
        file.write_all(body.as_bytes())
            .map_err(|source| CorpusError::StoreUnwritable {
                path: manifest,
                source,
            })
    }

    /// Persist one completed paraphrase: text file plus manifest entry.
    pub fn persist_record(&self, record: &ParaphraseRecord) -> Result<(), CorpusError> {
        let dir = self.cell_dir(&record.model, record.temperature);
        std::fs::create_dir_all(&dir).map_err(|source| CorpusError::StoreUnwritable {
            path: dir.clone(),
            source,
        })?;
        let file_name = record_file_name(&record.chapter, record.round);
        let path = dir.join(&file_name);
        std::fs::write(&path, record.text.as_bytes()).map_err(|source| {
            CorpusError::StoreUnwritable { path, source }
        })?;
        self.append_manifest_entry(
            &dir,
            &file_name,
            &[
                ("chapter", record.chapter.clone()),
                ("source", record.source_corpus.to_string()),
                ("round", record.round.to_string()),
                ("status", "done".to_string()),
                ("checksum", text_checksum(&record.text)),
                ("fingerprint", record.prompt_fingerprint.clone()),
                ("requested-at", record.requested_at_ms.to_string()),
                ("responded-at", record.responded_at_ms.to_string()),
            ],
        )
    }

    /// Record a failed or skipped cell in the ledger (no text file).
    pub fn persist_status(
        &self,
        key: &CellKey,
        source: SourceCorpus,
        status: &CellStatus,
    ) -> Result<(), CorpusError> {
        let (status_name, reason) = match status {
            CellStatus::Done => ("done", String::new()),
            CellStatus::Failed(reason) => ("failed", reason.clone()),
            CellStatus::Skipped(reason) => ("skipped", reason.clone()),
        };
        let dir = self.cell_dir(&key.model, key.temperature);
        self.append_manifest_entry(
            &dir,
            &record_file_name(&key.chapter, key.round),
            &[
                ("chapter", key.chapter.clone()),
                ("source", source.to_string()),
                ("round", key.round.to_string()),
                ("status", status_name.to_string()),
                ("reason", reason),
            ],
        )
    }

    fn cell_dirs(&self) -> Result<Vec<(String, Temperature, PathBuf)>, CorpusError> {
        let mut dirs = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(entries) => entries,
            Err(source) if source.kind() == std::io::ErrorKind::NotFound => return Ok(dirs),
            Err(source) => {
                return Err(CorpusError::SourceUnreadable {
                    path: self.root.clone(),
                    source,
                })
            }
        };
        for entry in entries {
            let entry = entry.map_err(|source| CorpusError::SourceUnreadable {
                path: self.root.clone(),
                source,
            })?;
            if !entry.path().is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some((model, temperature)) = parse_dir_name(&name) {
                dirs.push((model, temperature, entry.path()));
            }
        }
        dirs.sort();
        Ok(dirs)
    }

    fn read_manifest_entries(
        &self,
        dir: &Path,
    ) -> Result<BTreeMap<String, BTreeMap<String, String>>, CorpusError> {
        let manifest = dir.join("manifest");
        let text = std::fs::read_to_string(&manifest).map_err(|source| {
            CorpusError::SourceUnreadable {
                path: manifest.clone(),
                source,
            }
        })?;
        let mut entries: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix("[record ").and_then(|s| s.strip_suffix(']')) {
                let key = name.trim().to_string();
                // Last entry wins: a newer section replaces the older one.
                entries.insert(key.clone(), BTreeMap::new());
                current = Some(key);
                continue;
            }
            let section = current.as_ref().ok_or(CorpusError::MalformedManifest {
                path: manifest.clone(),
                line: idx + 1,
            })?;
            let (key, value) = line.split_once('=').ok_or(CorpusError::MalformedManifest {
                path: manifest.clone(),
                line: idx + 1,
            })?;
            entries
                .get_mut(section)
                .expect("section was just inserted")
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(entries)
    }

    /// All Done records, checksum-verified, in (model, temperature, chapter,
    /// round) order.
    pub fn load_records(&self) -> Result<Vec<ParaphraseRecord>, CorpusError> {
        let mut records = Vec::new();
        for (model, temperature, dir) in self.cell_dirs()? {
            let entries = self.read_manifest_entries(&dir)?;
            for (file_key, fields) in entries {
                if fields.get("status").map(String::as_str) != Some("done") {
                    continue;
                }
                let path = dir.join(&file_key);
                let text = std::fs::read_to_string(&path).map_err(|source| {
                    CorpusError::SourceUnreadable {
                        path: path.clone(),
                        source,
                    }
                })?;
                let expected = fields.get("checksum").cloned().unwrap_or_default();
                let actual = text_checksum(&text);
                if expected != actual {
                    return Err(CorpusError::StoreCorrupt {
                        reason: format!(
                            "{} checksum mismatch: manifest {expected}, file {actual}",
                            path.display()
                        ),
                    });
                }
                let missing = |key: &str| CorpusError::StoreCorrupt {
                    reason: format!("{} manifest entry lacks {key}", path.display()),
                };
                let chapter = fields.get("chapter").ok_or_else(|| missing("chapter"))?;
                let round: usize = fields
                    .get("round")
                    .ok_or_else(|| missing("round"))?
                    .parse()
                    .map_err(|_| missing("round"))?;
                let source_corpus = fields
                    .get("source")
                    .map(String::as_str)
                    .unwrap_or("primary")
                    .parse()
                    .map_err(|_| missing("source"))?;
                records.push(ParaphraseRecord {
                    chapter: chapter.clone(),
                    source_corpus,
                    model: model.clone(),
                    temperature,
                    round,
                    text,
                    requested_at_ms: fields
                        .get("requested-at")
                        .and_then(|v| v.parse().ok())
                        .unwrap_or(0),
                    responded_at_ms: fields
                        .get("responded-at")
                        .and_then(|v| v.parse().ok())
                        .unwrap_or(0),
                    prompt_fingerprint: fields.get("fingerprint").cloned().unwrap_or_default(),
                });
            }
        }
        records.sort_by(|a, b| {
            (&a.model, a.temperature, &a.chapter, a.round)
                .cmp(&(&b.model, b.temperature, &b.chapter, b.round))
        });
        Ok(records)
    }

    /// The full cell ledger with last-entry-wins status per cell.
    pub fn ledger(&self) -> Result<BTreeMap<CellKey, CellStatus>, CorpusError> {
        let mut ledger = BTreeMap::new();
        for (model, temperature, dir) in self.cell_dirs()? {
            for (file_key, fields) in self.read_manifest_entries(&dir)? {
                let chapter = match fields.get("chapter") {
                    Some(c) => c.clone(),
                    None => continue,
                };
                let round = match fields.get("round").and_then(|v| v.parse().ok()) {
                    Some(r) => r,
                    None => continue,
                };
                let reason = fields.get("reason").cloned().unwrap_or_default();
                let status = match fields.get("status").map(String::as_str) {
                    Some("done") => CellStatus::Done,
                    Some("failed") => CellStatus::Failed(reason),
                    Some("skipped") => CellStatus::Skipped(reason),
                    _ => {
                        return Err(CorpusError::StoreCorrupt {
                            reason: format!("{file_key} has no recognizable status"),
                        })
                    }
                };
                ledger.insert(
                    CellKey {
                        model: model.clone(),
                        temperature,
                        chapter,
                        round,
                    },
                    status,
                );
            }
        }
        Ok(ledger)
    }

    pub fn write_run_manifest(&self, manifest: &RunManifest) -> Result<(), CorpusError> {
        std::fs::create_dir_all(&self.root).map_err(|source| CorpusError::StoreUnwritable {
            path: self.root.clone(),
            source,
        })?;
        let path = self.root.join("run.manifest");
        std::fs::write(&path, manifest.to_kv().render()).map_err(|source| {
            CorpusError::StoreUnwritable { path, source }
        })
    }

    pub fn read_run_manifest(&self) -> Result<Option<RunManifest>, CorpusError> {
        let path = self.root.join("run.manifest");
        let text = match std::fs::read_to_string(&path) {
            Ok(text) => text,
            Err(source) if source.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CorpusError::SourceUnreadable { path, source }),
        };
        let doc = KvDocument::parse(&text).map_err(|e| CorpusError::StoreCorrupt {
            reason: format!("run manifest: {e}"),
        })?;
        RunManifest::from_kv(&doc).map(Some)
    }

    /// Full integrity pass: every Done record's checksum, every manifest
    /// parseable. Collects problems instead of stopping at the first.
    pub fn validate(&self) -> Result<StoreValidation, CorpusError> {
        let mut validation = StoreValidation::default();
        for (_, _, dir) in self.cell_dirs()? {
            let entries = match self.read_manifest_entries(&dir) {
                Ok(entries) => entries,
                Err(err) => {
                    validation.problems.push(err.to_string());
                    continue;
                }
            };
            for (file_key, fields) in entries {
                if fields.get("status").map(String::as_str) != Some("done") {
                    continue;
                }
                let path = dir.join(&file_key);
                validation.records_checked += 1;
                match std::fs::read_to_string(&path) {
                    Ok(text) => {
                        let expected = fields.get("checksum").cloned().unwrap_or_default();
                        let actual = text_checksum(&text);
                        if expected != actual {
                            validation.problems.push(format!(
                                "{}: checksum mismatch (manifest {expected}, file {actual})",
                                path.display()
                            ));
                        }
                    }
                    Err(err) => validation
                        .problems
                        .push(format!("{}: {err}", path.display())),
                }
            }
        }
        Ok(validation)
    }
}

/// Every cell a campaign over these inputs should account for. Models that
/// do not support a temperature still get cells (they are Skipped).
pub fn expected_cells(
    chapters: &[String],
    models: &[&super::ModelSpec],
    temperatures: &[Temperature],
    rounds_t0: usize,
    rounds_t1: usize,
) -> Vec<CellKey> {
    let mut cells = Vec::new();
    for model in models {
        for &temperature in temperatures {
            let rounds = match temperature {
                Temperature::Zero => rounds_t0,
                Temperature::One => rounds_t1,
            };
            for chapter in chapters {
                for round in 1..=rounds {
                    cells.push(CellKey {
                        model: model.id.clone(),
                        temperature,
                        chapter: chapter.clone(),
                        round,
                    });
                }
            }
        }
    }
    cells
}
