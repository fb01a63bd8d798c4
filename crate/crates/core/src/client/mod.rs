//! Paraphrase generation against a chat-completion API.
//!
//! The prompt is a fixed template; rounds run strictly sequentially with a
//! configurable gap between consecutive live requests so provider-side
//! caching cannot correlate them; transient errors retry with exponential
//! backoff; and every (chapter, model, temperature, round) cell lands in the
//! record store ledger as done, failed or skipped. Campaigns are resumable:
//! settled cells are never re-requested.

pub mod transport;

use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;
use crate::corpus::{
    hex_encode, CellKey, CellStatus, CorpusError, DocumentPair, ModelSpec, ParaphraseRecord,
    RecordStore, SourceCorpus,
};
use crate::similarity::Temperature;

pub use transport::{
    ChatRequest, ChatResponse, ChatTransport, LiveTransport, RecordTransport, ReplayTransport,
    ScriptedTransport, TransportError,
};

/// The fixed instruction prefix; the document text is appended verbatim.
pub const PROMPT_PREFIX: &str =
    "Answer ONLY the question, no extra context. Please paraphrase the following text: ";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("text is empty")]
    EmptyText,
    #[error("inter-request gap must be positive for live transports")]
    InvalidGap,
    #[error(transparent)]
    Store(#[from] CorpusError),
}

/// Render the exact prompt for a document text.
pub fn render_prompt(text: &str) -> Result<String, ClientError> {
    if text.trim().is_empty() {
        return Err(ClientError::EmptyText);
    }
    Ok(format!("{PROMPT_PREFIX}{text}"))
}

/// SHA-256 of the rendered prompt, hex-encoded.
pub fn prompt_fingerprint(prompt: &str) -> String {
    hex_encode(&Sha256::digest(prompt.as_bytes()))
}

/// Request pacing and retry settings.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    /// Minimum spacing between consecutive request starts (live transports).
    pub gap: Duration,
    /// Retries after the first attempt for transient errors.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub retry_base: Duration,
    /// Send `"reasoning": "none"` with every request.
    pub reasoning_none: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            gap: Duration::from_secs(30),
            max_retries: 3,
            retry_base: Duration::from_secs(1),
            reasoning_none: false,
        }
    }
}

/// Outcome of one campaign cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done(ParaphraseRecord),
    Failed(String),
    Skipped(String),
}

impl CellOutcome {
    pub fn status(&self) -> CellStatus {
        match self {
            CellOutcome::Done(_) => CellStatus::Done,
            CellOutcome::Failed(reason) => CellStatus::Failed(reason.clone()),
            CellOutcome::Skipped(reason) => CellStatus::Skipped(reason.clone()),
        }
    }
}

/// Tracks the previous request start so the gap spans rounds and models.
#[derive(Debug, Default)]
pub struct Pacer {
    last_request_at_ms: Option<u64>,
}

impl Pacer {
    pub fn new() -> Self {
        Self::default()
    }

    fn pace(&mut self, clock: &dyn Clock, gap: Duration) {
        let now = clock.now_millis();
        if let Some(last) = self.last_request_at_ms {
            let gap_ms = gap.as_millis() as u64;
            let elapsed = now.saturating_sub(last);
            if elapsed < gap_ms {
                clock.sleep(Duration::from_millis(gap_ms - elapsed));
            }
        }
    }

    fn mark(&mut self, at_ms: u64) {
        self.last_request_at_ms = Some(at_ms);
    }
}

fn send_with_retries(
    transport: &dyn ChatTransport,
    clock: &dyn Clock,
    config: &ProviderConfig,
    request: &ChatRequest,
) -> Result<ChatResponse, TransportError> {
    let mut attempt = 0u32;
    loop {
        match transport.send(request) {
            Ok(response) => return Ok(response),
            Err(TransportError::Transient(reason)) if attempt < config.max_retries => {
                clock.sleep(config.retry_base * 2u32.pow(attempt));
                attempt += 1;
                let _ = reason;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Generate round `round` for every document, in chapter order. Exactly one
/// outcome per document; a model that does not support the temperature skips
/// every document without touching the transport.
#[allow(clippy::too_many_arguments)]
pub fn generate_round(
    pairs: &[DocumentPair],
    model: &ModelSpec,
    temperature: Temperature,
    round: usize,
    transport: &dyn ChatTransport,
    clock: &dyn Clock,
    config: &ProviderConfig,
    pacer: &mut Pacer,
) -> Result<Vec<(String, CellOutcome)>, ClientError> {
    if !transport.is_offline() && config.gap.is_zero() {
        return Err(ClientError::InvalidGap);
    }
    let mut outcomes = Vec::with_capacity(pairs.len());
    if !model.supports(temperature) {
        for pair in pairs {
            outcomes.push((
                pair.chapter.clone(),
                CellOutcome::Skipped(format!(
                    "model {} does not support temperature {temperature}",
                    model.id
                )),
            ));
        }
        return Ok(outcomes);
    }

    for pair in pairs {
        let prompt = match render_prompt(&pair.primary_text) {
            Ok(prompt) => prompt,
            Err(ClientError::EmptyText) => {
                outcomes.push((
                    pair.chapter.clone(),
                    CellOutcome::Failed("document text is empty".into()),
                ));
                continue;
            }
            Err(other) => return Err(other),
        };
        let request = ChatRequest {
            model_id: model.id.clone(),
            api_name: model.api_name.clone(),
            temperature,
            send_temperature: model.supports_temperature_zero,
            reasoning_none: config.reasoning_none,
            prompt: prompt.clone(),
            chapter: pair.chapter.clone(),
            round,
        };

        if !transport.is_offline() {
            pacer.pace(clock, config.gap);
        }
        let requested_at_ms = clock.now_millis();
        pacer.mark(requested_at_ms);

        match send_with_retries(transport, clock, config, &request) {
            Ok(response) => {
                let responded_at_ms = clock.now_millis();
                outcomes.push((
                    pair.chapter.clone(),
                    CellOutcome::Done(ParaphraseRecord {
                        chapter: pair.chapter.clone(),
                        source_corpus: SourceCorpus::Primary,
                        model: model.id.clone(),
                        temperature,
                        round,
                        text: response.text,
                        requested_at_ms,
                        responded_at_ms,
                        prompt_fingerprint: prompt_fingerprint(&prompt),
                    }),
                ));
            }
            Err(err) => {
                outcomes.push((pair.chapter.clone(), CellOutcome::Failed(err.to_string())));
            }
        }
    }
    Ok(outcomes)
}

/// What to run: models in release order, temperatures, rounds per
/// temperature.
#[derive(Debug, Clone)]
pub struct CampaignPlan {
    pub models: Vec<ModelSpec>,
    pub temperatures: Vec<Temperature>,
    pub rounds_t0: usize,
    pub rounds_t1: usize,
}

impl CampaignPlan {
    fn rounds_for(&self, temperature: Temperature) -> usize {
        match temperature {
            Temperature::Zero => self.rounds_t0,
            Temperature::One => self.rounds_t1,
        }
    }

    fn max_rounds(&self) -> usize {
        self.temperatures
            .iter()
            .map(|&t| self.rounds_for(t))
            .max()
            .unwrap_or(0)
    }
}

/// Aggregate result of a campaign pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CampaignSummary {
    pub attempted: usize,
    pub done: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Cells already settled in the store and not re-requested.
    pub resumed: usize,
}

/// Run the whole campaign: rounds outermost (round 1 for every text, model
/// and temperature completes before any round 2 begins), one in-flight
/// request at a time, every outcome persisted to the store ledger.
/// Single-cell failures never abort the campaign.
pub fn run_campaign(
    pairs: &[DocumentPair],
    plan: &CampaignPlan,
    store: &RecordStore,
    transport: &dyn ChatTransport,
    clock: &dyn Clock,
    config: &ProviderConfig,
) -> Result<CampaignSummary, ClientError> {
    let ledger = store.ledger()?;
    let mut summary = CampaignSummary::default();
    let mut pacer = Pacer::new();

    for round in 1..=plan.max_rounds() {
        for model in &plan.models {
            for &temperature in &plan.temperatures {
                if round > plan.rounds_for(temperature) {
                    continue;
                }
                let pending: Vec<DocumentPair> = pairs
                    .iter()
                    .filter(|pair| {
                        let key = CellKey {
                            model: model.id.clone(),
                            temperature,
                            chapter: pair.chapter.clone(),
                            round,
                        };
                        match ledger.get(&key) {
                            Some(CellStatus::Done) | Some(CellStatus::Skipped(_)) => {
                                summary.resumed += 1;
                                false
                            }
                            _ => true,
                        }
                    })
                    .cloned()
                    .collect();
                if pending.is_empty() {
                    continue;
                }
                let outcomes = generate_round(
                    &pending,
                    model,
                    temperature,
                    round,
                    transport,
                    clock,
                    config,
                    &mut pacer,
                )?;
                for (chapter, outcome) in outcomes {
                    summary.attempted += 1;
                    let key = CellKey {
                        model: model.id.clone(),
                        temperature,
                        chapter,
                        round,
                    };
                    match &outcome {
                        CellOutcome::Done(record) => {
                            store.persist_record(record)?;
                            summary.done += 1;
                        }
                        CellOutcome::Failed(_) => {
                            store.persist_status(&key, SourceCorpus::Primary, &outcome.status())?;
                            summary.failed += 1;
                        }
                        CellOutcome::Skipped(_) => {
                            store.persist_status(&key, SourceCorpus::Primary, &outcome.status())?;
                            summary.skipped += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::corpus::ModelRegistry;

    fn pair(chapter: &str, words: usize) -> DocumentPair {
        let text: String = (0..words).map(|i| format!("w{i} ")).collect();
        DocumentPair {
            chapter: chapter.into(),
            primary_text: text.trim().to_string(),
            control_text: "control".into(),
            primary_words: words,
            control_words: 1,
        }
    }

    fn mock_model(id: &str, temp0: bool) -> ModelSpec {
        ModelSpec {
            id: id.into(),
            api_name: format!("{id}-api"),
            knowledge_cutoff: "2024-01-01".into(),
            release_date: "2024-06-01".into(),
            supports_temperature_zero: temp0,
            release_order: 0,
        }
    }

    fn fast_config() -> ProviderConfig {
        ProviderConfig {
            gap: Duration::from_secs(30),
            max_retries: 3,
            retry_base: Duration::from_millis(100),
            reasoning_none: false,
        }
    }

    #[test]
    fn prompt_template_is_exact() {
        assert_eq!(
            render_prompt("abc").unwrap(),
            "Answer ONLY the question, no extra context. Please paraphrase the following text: abc"
        );
    }

    #[test]
    fn whitespace_only_text_is_empty() {
        assert!(matches!(render_prompt("  \n\t "), Err(ClientError::EmptyText)));
    }

    #[test]
    fn fingerprint_is_stable() {
        let prompt = render_prompt("abc").unwrap();
        assert_eq!(prompt_fingerprint(&prompt), prompt_fingerprint(&prompt));
        assert_eq!(prompt_fingerprint(&prompt).len(), 64);
        assert_ne!(
            prompt_fingerprint(&prompt),
            prompt_fingerprint(&render_prompt("abd").unwrap())
        );
    }

    #[test]
    fn unsupported_temperature_skips_every_document() {
        let gpt5 = ModelRegistry::builtin().get("gpt-5").unwrap().clone();
        let transport = ScriptedTransport::new(|_| "never".into());
        let clock = ManualClock::starting_at(0);
        let outcomes = generate_round(
            &[pair("a", 5), pair("b", 5)],
            &gpt5,
            Temperature::Zero,
            1,
            &transport,
            &clock,
            &fast_config(),
            &mut Pacer::new(),
        )
        .unwrap();
        assert_eq!(outcomes.len(), 2);
        assert!(outcomes
            .iter()
            .all(|(_, o)| matches!(o, CellOutcome::Skipped(_))));
        assert!(transport.sent().is_empty());
    }

    #[test]
    fn transient_failures_retry_until_success() {
        let model = mock_model("m", true);
        let transport = ScriptedTransport::new(|r| format!("paraphrase of {}", r.chapter));
        let clock = ManualClock::starting_at(0);
        let docs = [pair("a", 5)];
        let probe = ChatRequest {
            model_id: "m".into(),
            api_name: "m-api".into(),
            temperature: Temperature::One,
            send_temperature: true,
            reasoning_none: false,
            prompt: String::new(),
            chapter: "a".into(),
            round: 1,
        };
        transport.inject_transient_failures(&probe, 2);
        let outcomes = generate_round(
            &docs,
            &model,
            Temperature::One,
            1,
            &transport,
            &clock,
            &fast_config(),
            &mut Pacer::new(),
        )
        .unwrap();
        assert!(matches!(outcomes[0].1, CellOutcome::Done(_)));
        assert_eq!(transport.sent().len(), 3);
        // Two backoff sleeps: base, then doubled.
        let sleeps = clock.sleeps();
        assert_eq!(sleeps.len(), 2);
        assert_eq!(sleeps[0], Duration::from_millis(100));
        assert_eq!(sleeps[1], Duration::from_millis(200));
    }

    #[test]
    fn retries_exhaust_into_failure() {
        let model = mock_model("m", true);
        let transport = ScriptedTransport::new(|_| "x".into());
        let clock = ManualClock::starting_at(0);
        let probe = ChatRequest {
            model_id: "m".into(),
            api_name: "m-api".into(),
            temperature: Temperature::One,
            send_temperature: true,
            reasoning_none: false,
            prompt: String::new(),
            chapter: "a".into(),
            round: 1,
        };
        transport.inject_transient_failures(&probe, 10);
        let outcomes = generate_round(
            &[pair("a", 5)],
            &model,
            Temperature::One,
            1,
            &transport,
            &clock,
            &fast_config(),
            &mut Pacer::new(),
        )
        .unwrap();
        assert!(matches!(outcomes[0].1, CellOutcome::Failed(_)));
        // initial attempt + max_retries
        assert_eq!(transport.sent().len(), 4);
    }

    #[test]
    fn consecutive_requests_are_gap_spaced() {
        let model = mock_model("m", true);
        let transport = ScriptedTransport::new(|_| "y".into());
        let clock = ManualClock::starting_at(0);
        let docs = [pair("a", 5), pair("b", 5), pair("c", 5)];
        let outcomes = generate_round(
            &docs,
            &model,
            Temperature::One,
            1,
            &transport,
            &clock,
            &fast_config(),
            &mut Pacer::new(),
        )
        .unwrap();
        let starts: Vec<u64> = outcomes
            .iter()
            .map(|(_, o)| match o {
                CellOutcome::Done(r) => r.requested_at_ms,
                _ => panic!("expected success"),
            })
            .collect();
        for window in starts.windows(2) {
            assert!(window[1] - window[0] >= 30_000, "gap violated: {starts:?}");
        }
    }

    #[test]
    fn offline_transports_skip_pacing() {
        let model = mock_model("m", true);
        let transport = ScriptedTransport::new(|_| "y".into()).offline();
        let clock = ManualClock::starting_at(0);
        generate_round(
            &[pair("a", 5), pair("b", 5)],
            &model,
            Temperature::One,
            1,
            &transport,
            &clock,
            &fast_config(),
            &mut Pacer::new(),
        )
        .unwrap();
        assert!(clock.sleeps().is_empty());
    }

    #[test]
    fn prompt_appears_verbatim_in_the_request_body() {
        let model = mock_model("m", true);
        let transport = ScriptedTransport::new(|_| "z".into());
        let clock = ManualClock::starting_at(0);
        let docs = [pair("a", 5)];
        generate_round(
            &docs,
            &model,
            Temperature::One,
            1,
            &transport,
            &clock,
            &fast_config(),
            &mut Pacer::new(),
        )
        .unwrap();
        let sent = transport.sent();
        let expected_prompt = render_prompt(&docs[0].primary_text).unwrap();
        assert_eq!(sent[0].prompt, expected_prompt);
        let body = sent[0].body_json();
        assert!(body.contains(&serde_json::to_string(&expected_prompt).unwrap()));
    }

    fn campaign_plan(models: Vec<ModelSpec>) -> CampaignPlan {
        CampaignPlan {
            models,
            temperatures: vec![Temperature::Zero, Temperature::One],
            rounds_t0: 2,
            rounds_t1: 3,
        }
    }

    #[test]
    fn rounds_run_outermost_across_models_and_temperatures() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path());
        let models = vec![mock_model("alpha", true), mock_model("beta", true)];
        let transport = ScriptedTransport::new(|r| format!("p {} {}", r.chapter, r.round));
        let clock = ManualClock::starting_at(0);
        let summary = run_campaign(
            &[pair("a", 5), pair("b", 5)],
            &campaign_plan(models),
            &store,
            &transport,
            &clock,
            &fast_config(),
        )
        .unwrap();
        let rounds: Vec<usize> = transport.sent().iter().map(|r| r.round).collect();
        let mut sorted = rounds.clone();
        sorted.sort_unstable();
        assert_eq!(rounds, sorted, "round-k requests must finish before round k+1");
        // 2 models x (2 rounds t0 + 3 rounds t1) x 2 chapters
        assert_eq!(summary.done, 2 * 5 * 2);
        assert_eq!(summary.failed, 0);
    }

    #[test]
    fn campaign_resumes_without_rerequesting_settled_cells() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path());
        let models = vec![mock_model("alpha", true)];
        let docs = [pair("a", 5), pair("b", 5)];
        let plan = campaign_plan(models);

        let first = ScriptedTransport::new(|r| format!("v {} {}", r.chapter, r.round));
        let clock = ManualClock::starting_at(0);
        run_campaign(&docs, &plan, &store, &first, &clock, &fast_config()).unwrap();
        let full_count = first.sent().len();

        // Simulate an interrupted run by deleting one cell's ledger dir and
        // re-running; only the wiped cells are requested again.
        std::fs::remove_dir_all(dir.path().join("alpha_t0")).unwrap();
        let second = ScriptedTransport::new(|r| format!("v {} {}", r.chapter, r.round));
        let summary =
            run_campaign(&docs, &plan, &store, &second, &clock, &fast_config()).unwrap();
        let resumed_count = second.sent().len();
        assert_eq!(resumed_count, 2 * 2); // 2 rounds t0 x 2 chapters
        assert!(resumed_count < full_count);
        assert_eq!(summary.resumed, 3 * 2); // t1 cells stayed settled
    }

    #[test]
    fn all_failing_transport_marks_every_cell_failed() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path());
        let transport = ScriptedTransport::new(|_| "never".into());
        let docs = [pair("a", 5)];
        let plan = CampaignPlan {
            models: vec![mock_model("m", true)],
            temperatures: vec![Temperature::One],
            rounds_t0: 0,
            rounds_t1: 2,
        };
        // Make every request fail permanently by scripting garbage... a
        // permanent failure needs a transport error, so inject unlimited
        // transient failures instead and let retries exhaust.
        for round in 1..=2 {
            let probe = ChatRequest {
                model_id: "m".into(),
                api_name: "m-api".into(),
                temperature: Temperature::One,
                send_temperature: true,
                reasoning_none: false,
                prompt: String::new(),
                chapter: "a".into(),
                round,
            };
            transport.inject_transient_failures(&probe, usize::MAX);
        }
        let clock = ManualClock::starting_at(0);
        let summary =
            run_campaign(&docs, &plan, &store, &transport, &clock, &fast_config()).unwrap();
        assert_eq!(summary.done, 0);
        assert_eq!(summary.failed, 2);
        let ledger = store.ledger().unwrap();
        assert!(ledger.values().all(|s| matches!(s, CellStatus::Failed(_))));
    }

    #[test]
    fn gpt5_campaign_cells_are_skipped_at_temperature_zero() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path());
        let gpt5 = ModelRegistry::builtin().get("gpt-5").unwrap().clone();
        let transport = ScriptedTransport::new(|r| format!("t {}", r.chapter));
        let clock = ManualClock::starting_at(0);
        let plan = CampaignPlan {
            models: vec![gpt5],
            temperatures: vec![Temperature::Zero, Temperature::One],
            rounds_t0: 2,
            rounds_t1: 1,
        };
        let summary = run_campaign(
            &[pair("a", 5)],
            &plan,
            &store,
            &transport,
            &clock,
            &fast_config(),
        )
        .unwrap();
        assert_eq!(summary.skipped, 2);
        assert_eq!(summary.done, 1);
        // No temperature-0 request ever reached the transport, and the
        // temperature-1 request omitted the parameter.
        assert!(transport
            .sent()
            .iter()
            .all(|r| r.temperature == Temperature::One && !r.send_temperature));
    }

    #[test]
    fn every_record_carries_the_canonical_prompt_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path());
        let docs = [pair("a", 6), pair("b", 9)];
        let plan = campaign_plan(vec![mock_model("m", true)]);
        let transport = ScriptedTransport::new(|r| format!("out {}", r.chapter));
        let clock = ManualClock::starting_at(0);
        run_campaign(&docs, &plan, &store, &transport, &clock, &fast_config()).unwrap();
        for record in store.load_records().unwrap() {
            let doc = docs.iter().find(|d| d.chapter == record.chapter).unwrap();
            let canonical = prompt_fingerprint(&render_prompt(&doc.primary_text).unwrap());
            assert_eq!(record.prompt_fingerprint, canonical);
        }
    }

    #[test]
    fn replay_runs_are_byte_identical() {
        use crate::fixtures::{demo_models, write_demo_tree};
        let dir = tempfile::tempdir().unwrap();
        let tree = write_demo_tree(&dir.path().join("demo")).unwrap();
        let pairs = [pair("harbor-01", 5), pair("harbor-02", 5)];
        let plan = CampaignPlan {
            models: demo_models(),
            temperatures: vec![Temperature::One],
            rounds_t0: 0,
            rounds_t1: 2,
        };
        let run = |store_dir: &std::path::Path| {
            let store = RecordStore::open(store_dir);
            let transport = crate::client::ReplayTransport::new(&tree.fixtures_dir);
            let clock = ManualClock::starting_at(5_000);
            run_campaign(&pairs, &plan, &store, &transport, &clock, &fast_config()).unwrap();
        };
        let store_a = dir.path().join("a");
        let store_b = dir.path().join("b");
        run(&store_a);
        run(&store_b);

        let mut rel_files = Vec::new();
        let mut stack = vec![store_a.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    rel_files.push(path.strip_prefix(&store_a).unwrap().to_path_buf());
                }
            }
        }
        assert!(!rel_files.is_empty());
        for rel in rel_files {
            let a = std::fs::read(store_a.join(&rel)).unwrap();
            let b = std::fs::read(store_b.join(&rel)).unwrap();
            assert_eq!(a, b, "{rel:?} differs between replay runs");
        }
    }

    #[test]
    fn zero_gap_with_a_live_style_transport_is_rejected() {
        let model = mock_model("m", true);
        let transport = ScriptedTransport::new(|_| "x".into());
        let clock = ManualClock::starting_at(0);
        let mut config = fast_config();
        config.gap = Duration::ZERO;
        let err = generate_round(
            &[pair("a", 5)],
            &model,
            Temperature::One,
            1,
            &transport,
            &clock,
            &config,
            &mut Pacer::new(),
        )
        .unwrap_err();
        assert!(matches!(err, ClientError::InvalidGap));
    }
}
