//! Offline analysis: dataset plus record store in, one deterministic
//! snapshot out.
//!
//! The snapshot carries every computed artifact (matrices, series, spreads,
//! relative means, the convergence report, corpus statistics) at full
//! precision. Report emission renders files from the snapshot only, so
//! re-rendering is byte-stable and never recomputes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::corpus::{
    corpus_stats, dataset_checksum, hex_encode, ingest_paired_corpus, CorpusError, CorpusStats,
    DocumentPair, LengthFilter, ParaphraseRecord, RecordStore, RejectedChapter,
};
use crate::parallel::Parallelism;
use crate::similarity::{
    CorpusSlice, EngineKind, GroupedDocument, SimilarityError, SprMatrix, Temperature,
};
use crate::sweep::{
    relative_means, run_sweep, temperature_spreads, trend_report, CellSelector,
    ConvergenceReport, MatrixSet, RelativeSeries, SeriesKind, SpreadSeries, SweepConfig,
    SweepError, SweepSeries,
};
use crate::text::{tokenize_and_encode, Vocabulary};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;
pub const SNAPSHOT_FILE: &str = "analysis.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no {0} path configured")]
    MissingPath(&'static str),
    #[error("store contains no complete documents for any requested model")]
    NoAnalyzableRecords,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// A chapter excluded from one (model, temperature) matrix and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDocument {
    pub model: String,
    pub temperature: Temperature,
    pub chapter: String,
    pub reason: String,
}

/// Everything one analysis run computed, serializable as `analysis.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSnapshot {
    pub schema_version: u32,
    pub engine: EngineKind,
    pub dataset_checksum: String,
    pub store_manifest_checksum: Option<String>,
    pub models: Vec<String>,
    pub temperatures: Vec<Temperature>,
    pub l_min: usize,
    pub l_max: usize,
    pub selector: CellSelector,
    pub base_model: Option<String>,
    pub flatness_tolerance: f64,
    pub matrices: Vec<SprMatrix>,
    pub series: Vec<SweepSeries>,
    pub spreads: Vec<SpreadSeries>,
    pub relatives: Vec<RelativeSeries>,
    pub convergence: ConvergenceReport,
    pub stats: CorpusStats,
    pub rejected: Vec<RejectedChapter>,
    pub dropped: Vec<DroppedDocument>,
    /// Explanatory notes: spreads or relatives that cannot exist (for
    /// example a model without temperature-0 support), skipped combinations.
    pub notes: Vec<String>,
}

/// Assemble the per-(model, temperature) corpus slice from complete
/// documents only. A document missing any round is dropped from the whole
/// slice so every cell averages the same chapters.
fn assemble_slice(
    pairs: &[DocumentPair],
    records: &[ParaphraseRecord],
    model: &str,
    temperature: Temperature,
    group_count: usize,
    config: &RunConfig,
    dropped: &mut Vec<DroppedDocument>,
) -> Result<Option<CorpusSlice>, SimilarityError> {
    let mut documents = Vec::new();
    for pair in pairs {
        let mut round_texts = Vec::with_capacity(group_count);
        let mut missing = None;
        for round in 1..=group_count {
            match records.iter().find(|r| {
                r.model == model
                    && r.temperature == temperature
                    && r.chapter == pair.chapter
                    && r.round == round
            }) {
                Some(record) => round_texts.push(record.text.clone()),
                None => {
                    missing = Some(round);
                    break;
                }
            }
        }
        if let Some(round) = missing {
            dropped.push(DroppedDocument {
                model: model.to_string(),
                temperature,
                chapter: pair.chapter.clone(),
                reason: format!("missing paraphrase round {round}"),
            });
            continue;
        }
        documents.push((pair, round_texts));
    }
    if documents.is_empty() {
        return Ok(None);
    }

    let mut vocab = Vocabulary::default();
    let grouped = documents
        .into_iter()
        .map(|(pair, round_texts)| {
            let original = tokenize_and_encode(
                &pair.primary_text,
                config.policy,
                &mut vocab,
                pair.chapter.as_str(),
            );
            let paraphrases = round_texts
                .iter()
                .enumerate()
                .map(|(i, text)| {
                    tokenize_and_encode(
                        text,
                        config.policy,
                        &mut vocab,
                        format!("{}#p{}", pair.chapter, i + 1),
                    )
                })
                .collect();
            let control = tokenize_and_encode(
                &pair.control_text,
                config.policy,
                &mut vocab,
                format!("{}#control", pair.chapter),
            );
            GroupedDocument {
                chapter: pair.chapter.clone(),
                original,
                paraphrases,
                control,
            }
        })
        .collect();
    CorpusSlice::new(model, temperature, group_count, grouped).map(Some)
}

/// Run the full offline analysis.
pub fn analyze(
    config: &RunConfig,
    engine: EngineKind,
    parallelism: Parallelism,
) -> Result<AnalysisSnapshot, PipelineError> {
    let index_path = config
        .dataset_index
        .as_ref()
        .ok_or(PipelineError::MissingPath("dataset"))?;
    let store_path = config
        .store
        .as_ref()
        .ok_or(PipelineError::MissingPath("store"))?;
    if config.l_min < 1 || config.l_min > config.l_max {
        return Err(PipelineError::Snapshot(format!(
            "invalid pattern-length range {}..={}",
            config.l_min, config.l_max
        )));
    }

    let ingest = ingest_paired_corpus(
        index_path,
        config.policy,
        LengthFilter {
            min_words: config.min_words,
            max_words: config.max_words,
        },
    )?;
    let store = RecordStore::open(store_path);
    let records = store.load_records()?;

    let model_ids: Vec<String> = if config.models.is_empty() {
        let mut ids: Vec<String> = records.iter().map(|r| r.model.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    } else {
        config.models.clone()
    };
    let models = config.registry.select(&model_ids)?;

    let mut notes = Vec::new();
    let mut dropped = Vec::new();
    let mut matrices: Vec<SprMatrix> = Vec::new();
    for model in &models {
        for &temperature in &config.temperatures {
            if !model.supports(temperature) {
                notes.push(format!(
                    "{}: no matrices at temperature {temperature} (unsupported by the model)",
                    model.id
                ));
                continue;
            }
            let group_count = match temperature {
                Temperature::Zero => config.rounds_t0,
                Temperature::One => config.rounds_t1,
            };
            let slice = assemble_slice(
                &ingest.pairs,
                &records,
                &model.id,
                temperature,
                group_count,
                config,
                &mut dropped,
            )?;
            match slice {
                Some(slice) => {
                    matrices.extend(crate::similarity::build_spr_matrices(
                        &slice,
                        config.l_min,
                        config.l_max,
                        engine,
                        parallelism,
                    )?);
                }
                None => notes.push(format!(
                    "{}: no complete documents at temperature {temperature}",
                    model.id
                )),
            }
        }
    }
    if matrices.is_empty() {
        return Err(PipelineError::NoAnalyzableRecords);
    }

    let release_order: Vec<String> = models.iter().map(|m| m.id.clone()).collect();
    let sweep_config = SweepConfig {
        l_min: config.l_min,
        l_max: config.l_max,
        temperatures: config.temperatures.clone(),
        models: release_order.clone(),
    };
    let set = MatrixSet::new(matrices);
    let series = run_sweep(&set, &sweep_config, config.selector)?;

    let (spreads, spread_skips) = temperature_spreads(&series)?;
    for skip in spread_skips {
        notes.push(skip.to_string());
    }

    let base_model = config.effective_base_model();
    let mut relatives = Vec::new();
    if let Some(base) = &base_model {
        for &temperature in &config.temperatures {
            let at_temp: Vec<SweepSeries> = series
                .iter()
                .filter(|s| s.kind == SeriesKind::Model && s.temperature == temperature)
                .cloned()
                .collect();
            if at_temp.is_empty() {
                continue;
            }
            match relative_means(&at_temp, base) {
                Ok(relative) => relatives.push(relative),
                Err(SweepError::BaseModelMissing { base }) => notes.push(format!(
                    "no relative means at temperature {temperature}: base model {base} absent"
                )),
                Err(other) => return Err(other.into()),
            }
        }
    }

    let convergence = trend_report(
        &series,
        &spreads,
        &relatives,
        &release_order,
        config.flatness_tolerance,
    );
    let stats = corpus_stats(&ingest.pairs, &records, config.policy);

    let store_manifest_checksum = {
        let path = store.root().join("run.manifest");
        std::fs::read(&path)
            .ok()
            .map(|bytes| hex_encode(&Sha256::digest(&bytes)))
    };

    Ok(AnalysisSnapshot {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        engine,
        dataset_checksum: dataset_checksum(&ingest.pairs),
        store_manifest_checksum,
        models: release_order,
        temperatures: config.temperatures.clone(),
        l_min: config.l_min,
        l_max: config.l_max,
        selector: config.selector,
        base_model,
        flatness_tolerance: config.flatness_tolerance,
        matrices: set.matrices,
        series,
        spreads,
        relatives,
        convergence,
        stats,
        rejected: ingest.rejected,
        dropped,
        notes,
    })
}

impl AnalysisSnapshot {
    /// Serialize to `analysis.json` under `out`. Formatting is pretty-printed
    /// with a trailing newline and is byte-stable for identical content.
    pub fn write(&self, out: &Path) -> Result<std::path::PathBuf, PipelineError> {
        std::fs::create_dir_all(out).map_err(|e| PipelineError::Snapshot(e.to_string()))?;
        let path = out.join(SNAPSHOT_FILE);
        let mut body = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Snapshot(e.to_string()))?;
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| PipelineError::Snapshot(e.to_string()))?;
        Ok(path)
    }

    pub fn load(out: &Path) -> Result<Self, PipelineError> {
        let path = out.join(SNAPSHOT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            PipelineError::Snapshot(format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Snapshot(e.to_string()))
    }
}
