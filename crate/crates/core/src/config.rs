//! Line-oriented `key=value` documents with `[section]` headers, and the run
//! configuration assembled from such a file plus CLI flag overrides.
//!
//! The format is deliberately minimal: one key per line, `#` comments, no
//! quoting, values taken verbatim after the first `=`. Manifests in the
//! record store use the same machinery, which keeps everything greppable and
//! diffable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::models::{ModelRegistry, ModelSpec};
use crate::similarity::Temperature;
use crate::sweep::{CellSelector, SweepConfig, DEFAULT_FLATNESS_TOLERANCE};
use crate::text::TokenizationPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key=value` or `[section]`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("section [{section}] key {key}: {problem}")]
    BadValue {
        section: String,
        key: String,
        problem: String,
    },
    #[error("model definition [{section}] is incomplete: missing {key}")]
    IncompleteModel { section: String, key: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// An ordered key=value document. Keys before any header live in the
/// anonymous "" section. Duplicate keys keep the last value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDocument {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl KvDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = KvDocument::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_string();
                doc.ensure_section(&current);
                continue;
            }
            match line.split_once('=') {
                Some((key, value)) => {
                    doc.set(&current, key.trim(), value.trim());
                }
                None => {
                    return Err(ConfigError::Malformed {
                        line: idx + 1,
                        text: raw.to_string(),
                    })
                }
            }
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn ensure_section(&mut self, name: &str) -> usize {
        if let Some(pos) = self.sections.iter().position(|(n, _)| n == name) {
            return pos;
        }
        self.sections.push((name.to_string(), Vec::new()));
        self.sections.len() - 1
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let pos = self.ensure_section(section);
        let entries = &mut self.sections[pos].1;
        let value = value.into();
        match entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(n, _)| n == section)
            .and_then(|(_, entries)| entries.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn section_entries<'a>(
        &'a self,
        section: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.sections
            .iter()
            .filter(move |(n, _)| n == section)
            .flat_map(|(_, entries)| entries.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Render back to text. Sections appear in insertion order, keys in
    /// insertion order, so serialize∘parse is stable.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if !name.is_empty() {
                let _ = writeln!(out, "[{name}]");
            }
            for (key, value) in entries {
                let _ = writeln!(out, "{key}={value}");
            }
        }
        out
    }
}

/// Transport mode of a campaign run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunMode {
    /// Real HTTP requests.
    Live,
    /// Real requests, responses persisted as fixtures.
    Record,
    /// Responses served from fixtures, no network at all.
    #[default]
    Replay,
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(RunMode::Live),
            "record" => Ok(RunMode::Record),
            "replay" => Ok(RunMode::Replay),
            other => Err(format!("unknown mode {other:?}, expected live|record|replay")),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Live => "live",
            RunMode::Record => "record",
            RunMode::Replay => "replay",
        })
    }
}

/// Everything a run needs, merged from defaults, a config file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_index: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub models: Vec<String>,
    pub temperatures: Vec<Temperature>,
    pub rounds_t0: usize,
    pub rounds_t1: usize,
    pub l_min: usize,
    pub l_max: usize,
    pub mode: RunMode,
    pub gap_seconds: u64,
    pub endpoint: String,
    pub credential_env: String,
    pub timeout_seconds: u64,
    pub max_retries: u32,
    pub reasoning_none: bool,
    pub selector: CellSelector,
    pub base_model: Option<String>,
    pub flatness_tolerance: f64,
    pub policy: TokenizationPolicy,
    pub min_words: usize,
    pub max_words: usize,
    /// Builtin models plus any `[model <id>]` sections from the config file.
    pub registry: ModelRegistry,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_index: None,
            store: None,
            out: None,
            fixtures: None,
            models: Vec::new(),
            temperatures: vec![Temperature::Zero, Temperature::One],
            rounds_t0: 3,
            rounds_t1: 5,
            l_min: 3,
            l_max: 20,
            mode: RunMode::Replay,
            gap_seconds: 30,
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            credential_env: "OPENAI_API_KEY".to_string(),
            timeout_seconds: 120,
            max_retries: 3,
            reasoning_none: false,
            selector: CellSelector::ParaphrasePairs,
            base_model: None,
            flatness_tolerance: DEFAULT_FLATNESS_TOLERANCE,
            policy: TokenizationPolicy::default(),
            min_words: 100,
            max_words: 2000,
            registry: ModelRegistry::builtin(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(
    section: &str,
    key: &str,
    value: &str,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        section: section.to_string(),
        key: key.to_string(),
        problem: e.to_string(),
    })
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::BadValue {
            section: section.to_string(),
            key: key.to_string(),
            problem: format!("expected a boolean, got {other:?}"),
        }),
    }
}

fn parse_temperatures(section: &str, key: &str, value: &str) -> Result<Vec<Temperature>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "0" => Ok(Temperature::Zero),
            "1" => Ok(Temperature::One),
            other => Err(ConfigError::BadValue {
                section: section.to_string(),
                key: key.to_string(),
                problem: format!("temperature must be 0 or 1, got {other:?}"),
            }),
        })
        .collect()
}

fn resolve_path(base: &Path, value: &str) -> PathBuf {
    let path = PathBuf::from(value);
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

impl RunConfig {
    /// Apply a parsed config file on top of the defaults. Relative paths in
    /// the file resolve against `base` (the config file's directory). CLI
    /// flags are applied by the caller afterwards, so flags always win.
    pub fn apply_file(&mut self, doc: &KvDocument, base: &Path) -> Result<(), ConfigError> {
        if let Some(v) = doc.get("paths", "dataset") {
            self.dataset_index = Some(resolve_path(base, v));
        }
        if let Some(v) = doc.get("paths", "store") {
            self.store = Some(resolve_path(base, v));
        }
        if let Some(v) = doc.get("paths", "out") {
            self.out = Some(resolve_path(base, v));
        }
        if let Some(v) = doc.get("paths", "fixtures") {
            self.fixtures = Some(resolve_path(base, v));
        }

        if let Some(v) = doc.get("run", "models") {
            self.models = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        if let Some(v) = doc.get("run", "temps") {
            self.temperatures = parse_temperatures("run", "temps", v)?;
        }
        if let Some(v) = doc.get("run", "rounds-t0") {
            self.rounds_t0 = parse_value("run", "rounds-t0", v)?;
        }
        if let Some(v) = doc.get("run", "rounds-t1") {
            self.rounds_t1 = parse_value("run", "rounds-t1", v)?;
        }
        if let Some(v) = doc.get("run", "mode") {
            self.mode = parse_value("run", "mode", v)?;
        }
        if let Some(v) = doc.get("run", "gap-seconds") {
            self.gap_seconds = parse_value("run", "gap-seconds", v)?;
        }

        if let Some(v) = doc.get("sweep", "l-min") {
            self.l_min = parse_value("sweep", "l-min", v)?;
        }
        if let Some(v) = doc.get("sweep", "l-max") {
            self.l_max = parse_value("sweep", "l-max", v)?;
        }
        if let Some(v) = doc.get("sweep", "selector") {
            self.selector = match v {
                "paraphrase-pairs" => CellSelector::ParaphrasePairs,
                "original-vs-paraphrase" => CellSelector::OriginalVsParaphrase,
                "paraphrase-pairs-with-diagonal" => CellSelector::ParaphrasePairsWithDiagonal,
                other => {
                    return Err(ConfigError::BadValue {
                        section: "sweep".into(),
                        key: "selector".into(),
                        problem: format!("unknown selector {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = doc.get("sweep", "base-model") {
            self.base_model = Some(v.to_string());
        }
        if let Some(v) = doc.get("sweep", "flatness-tolerance") {
            self.flatness_tolerance = parse_value("sweep", "flatness-tolerance", v)?;
        }

        if let Some(v) = doc.get("provider", "endpoint") {
            self.endpoint = v.to_string();
        }
        if let Some(v) = doc.get("provider", "credential-env") {
            self.credential_env = v.to_string();
        }
        if let Some(v) = doc.get("provider", "timeout-seconds") {
            self.timeout_seconds = parse_value("provider", "timeout-seconds", v)?;
        }
        if let Some(v) = doc.get("provider", "max-retries") {
            self.max_retries = parse_value("provider", "max-retries", v)?;
        }
        if let Some(v) = doc.get("provider", "reasoning-none") {
            self.reasoning_none = parse_bool("provider", "reasoning-none", v)?;
        }

        if let Some(v) = doc.get("policy", "lowercase") {
            self.policy.lowercase = parse_bool("policy", "lowercase", v)?;
        }
        if let Some(v) = doc.get("policy", "strip-punctuation") {
            self.policy.strip_punctuation = parse_bool("policy", "strip-punctuation", v)?;
        }
        if let Some(v) = doc.get("policy", "collapse-whitespace") {
            self.policy.collapse_whitespace = parse_bool("policy", "collapse-whitespace", v)?;
        }
        if let Some(v) = doc.get("corpus", "min-words") {
            self.min_words = parse_value("corpus", "min-words", v)?;
        }
        if let Some(v) = doc.get("corpus", "max-words") {
            self.max_words = parse_value("corpus", "max-words", v)?;
        }

        for section in doc.section_names().map(String::from).collect::<Vec<_>>() {
            if let Some(id) = section.strip_prefix("model ") {
                let spec = model_from_section(doc, &section, id)?;
                self.registry.insert(spec)?;
            }
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            l_min: self.l_min,
            l_max: self.l_max,
            temperatures: self.temperatures.clone(),
            models: self.models.clone(),
        }
    }

    /// Base model for relative means: explicit config, else the earliest
    /// selected model by release order.
    pub fn effective_base_model(&self) -> Option<String> {
        if self.base_model.is_some() {
            return self.base_model.clone();
        }
        self.registry
            .select(&self.models)
            .ok()?
            .first()
            .map(|m| m.id.clone())
    }
}

fn model_from_section(doc: &KvDocument, section: &str, id: &str) -> Result<ModelSpec, ConfigError> {
    let lookup = |key: &str| -> Result<&str, ConfigError> {
        doc.get(section, key).ok_or_else(|| ConfigError::IncompleteModel {
            section: section.to_string(),
            key: key.to_string(),
        })
    };
    Ok(ModelSpec {
        id: id.trim().to_string(),
        api_name: doc.get(section, "api-name").unwrap_or(id).trim().to_string(),
        knowledge_cutoff: lookup("knowledge-cutoff")?.to_string(),
        release_date: lookup("release-date")?.to_string(),
        supports_temperature_zero: parse_bool(
            section,
            "supports-temperature-0",
            lookup("supports-temperature-0")?,
        )?,
        release_order: parse_value(section, "release-order", lookup("release-order")?)?,
    })
}

/// Stable map rendering helper for run metadata echoes.
pub fn render_sorted(entries: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}
