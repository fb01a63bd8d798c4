//! `spr`: measure how similar a model's paraphrases of the same text are,
//! across paraphrase rounds, sampling temperatures, pattern lengths and model
//! versions.
//!
//! Subcommands mirror the pipeline stages: `ingest` checks the paired
//! dataset, `generate` runs the paraphrase campaign (live, record or replay),
//! `analyze` computes matrices and series into an analysis snapshot plus
//! report files, `report` re-renders files from the snapshot, and `validate`
//! audits the record store. `fixtures` writes a self-contained offline demo.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use spr_core::client::{
    run_campaign, CampaignPlan, LiveTransport, ProviderConfig, RecordTransport, ReplayTransport,
};
use spr_core::clock::SystemClock;
use spr_core::config::{KvDocument, RunConfig, RunMode};
use spr_core::corpus::{
    dataset_checksum, expected_cells, ingest_paired_corpus, LengthFilter, RecordStore,
    RunManifest, STORE_SCHEMA_VERSION,
};
use spr_core::fixtures::write_demo_tree;
use spr_core::parallel::Parallelism;
use spr_core::pipeline::{analyze, AnalysisSnapshot};
use spr_core::report::emit_all;
use spr_core::similarity::{EngineKind, Temperature};

/// Exit code for campaigns or validations that completed with failures.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spr",
    version,
    about = "Word-pattern similarity analytics for paraphrase campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// Config file (key=value with [section] headers); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset index file (chapter_key<TAB>primary<TAB>control per line).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Record store directory.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Output directory for analysis and report files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fixture directory for record/replay transports.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Comma-separated model ids.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated temperatures (0 and/or 1).
    #[arg(long, global = true, value_delimiter = ',')]
    temps: Option<Vec<u8>>,
    /// Paraphrase rounds at temperature 0.
    #[arg(long = "rounds-t0", global = true)]
    rounds_t0: Option<usize>,
    /// Paraphrase rounds at temperature 1.
    #[arg(long = "rounds-t1", global = true)]
    rounds_t1: Option<usize>,
    /// Smallest pattern length to sweep.
    #[arg(long = "l-min", global = true)]
    l_min: Option<usize>,
    /// Largest pattern length to sweep.
    #[arg(long = "l-max", global = true)]
    l_max: Option<usize>,
    /// Transport mode: live, record or replay.
    #[arg(long, global = true)]
    mode: Option<RunMode>,
    /// Minimum seconds between consecutive live requests.
    #[arg(long = "gap-seconds", global = true)]
    gap_seconds: Option<u64>,
    /// Pattern engine: suffix-array (default) or brute-force.
    #[arg(long, global = true)]
    engine: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Read the paired dataset, apply filters, report what was admitted.
    Ingest,
    /// Run the paraphrase campaign into the record store.
    Generate,
    /// Compute matrices and series from the store; write snapshot + reports.
    Analyze,
    /// Re-render report files from an existing analysis snapshot.
    Report,
    /// Audit record-store integrity and ledger completeness.
    Validate,
    /// Write the offline demo tree (dataset, fixtures, config).
    Fixtures,
}

fn build_config(flags: &Flags) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &flags.config {
        let doc = KvDocument::load(path)
            .with_context(|| format!("loading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.apply_file(&doc, base)?;
    }
    if let Some(v) = &flags.dataset {
        config.dataset_index = Some(v.clone());
    }
    if let Some(v) = &flags.store {
        config.store = Some(v.clone());
    }
    if let Some(v) = &flags.out {
        config.out = Some(v.clone());
    }
    if let Some(v) = &flags.fixtures {
        config.fixtures = Some(v.clone());
    }
    if let Some(v) = &flags.models {
        config.models = v.clone();
    }
    if let Some(temps) = &flags.temps {
        config.temperatures = temps
            .iter()
            .map(|&t| Temperature::try_from(t).map_err(|e| anyhow!(e)))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(v) = flags.rounds_t0 {
        config.rounds_t0 = v;
    }
    if let Some(v) = flags.rounds_t1 {
        config.rounds_t1 = v;
    }
    if let Some(v) = flags.l_min {
        config.l_min = v;
    }
    if let Some(v) = flags.l_max {
        config.l_max = v;
    }
    if let Some(v) = flags.mode {
        config.mode = v;
    }
    if let Some(v) = flags.gap_seconds {
        config.gap_seconds = v;
    }
    Ok(config)
}

fn engine_kind(flags: &Flags) -> Result<EngineKind> {
    match flags.engine.as_deref() {
        None | Some("suffix-array") => Ok(EngineKind::SuffixArray),
        Some("brute-force") => Ok(EngineKind::BruteForce),
        Some(other) => bail!("unknown engine {other:?}, expected suffix-array or brute-force"),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| anyhow!("no {what} configured; pass --{what} or set it in the config file"))
}

fn length_filter(config: &RunConfig) -> LengthFilter {
    LengthFilter {
        min_words: config.min_words,
        max_words: config.max_words,
    }
}

fn cmd_ingest(config: &RunConfig) -> Result<ExitCode> {
    let index = require(&config.dataset_index, "dataset")?;
    let report = ingest_paired_corpus(index, config.policy, length_filter(config))?;
    println!(
        "admitted {} chapters ({} rejected)",
        report.pairs.len(),
        report.rejected.len()
    );
    for pair in &report.pairs {
        println!(
            "  + {} ({} words primary, {} control)",
            pair.chapter, pair.primary_words, pair.control_words
        );
    }
    for rejected in &report.rejected {
        println!("  - {}: {}", rejected.chapter, rejected.reason);
    }
    println!("dataset checksum {}", dataset_checksum(&report.pairs));
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(config: &RunConfig) -> Result<ExitCode> {
    let index = require(&config.dataset_index, "dataset")?;
    let store_path = require(&config.store, "store")?;
    if config.models.is_empty() {
        bail!("no models selected; pass --models or set [run] models in the config");
    }
    let ingest = ingest_paired_corpus(index, config.policy, length_filter(config))?;
    if ingest.pairs.is_empty() {
        bail!("dataset admitted no chapters");
    }

    let models = config.registry.select(&config.models)?;
    let plan = CampaignPlan {
        models: models.iter().map(|&m| m.clone()).collect(),
        temperatures: config.temperatures.clone(),
        rounds_t0: config.rounds_t0,
        rounds_t1: config.rounds_t1,
    };
    let store = RecordStore::open(store_path);
    store.write_run_manifest(&RunManifest {
        schema_version: STORE_SCHEMA_VERSION,
        dataset_checksum: dataset_checksum(&ingest.pairs),
        models: config.models.clone(),
        temperatures: config.temperatures.clone(),
        rounds_t0: config.rounds_t0,
        rounds_t1: config.rounds_t1,
        l_min: config.l_min,
        l_max: config.l_max,
        policy: config.policy,
    })?;

    let provider = ProviderConfig {
        gap: Duration::from_secs(config.gap_seconds),
        max_retries: config.max_retries,
        retry_base: Duration::from_secs(1),
        reasoning_none: config.reasoning_none,
    };
    let clock = SystemClock;
    let summary = match config.mode {
        RunMode::Live => {
            let transport = LiveTransport::new(
                config.endpoint.clone(),
                config.credential_env.clone(),
                Duration::from_secs(config.timeout_seconds),
            );
            run_campaign(&ingest.pairs, &plan, &store, &transport, &clock, &provider)?
        }
        RunMode::Record => {
            let fixtures = require(&config.fixtures, "fixtures")?;
            let transport = RecordTransport::new(
                LiveTransport::new(
                    config.endpoint.clone(),
                    config.credential_env.clone(),
                    Duration::from_secs(config.timeout_seconds),
                ),
                fixtures,
            );
            run_campaign(&ingest.pairs, &plan, &store, &transport, &clock, &provider)?
        }
        RunMode::Replay => {
            let fixtures = require(&config.fixtures, "fixtures")?;
            let transport = ReplayTransport::new(fixtures);
            run_campaign(&ingest.pairs, &plan, &store, &transport, &clock, &provider)?
        }
    };

    println!(
        "campaign: {} done, {} failed, {} skipped, {} resumed (of {} attempted)",
        summary.done, summary.failed, summary.skipped, summary.resumed, summary.attempted
    );
    if summary.failed > 0 {
        Ok(ExitCode::from(EXIT_PARTIAL))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_analyze(config: &RunConfig, engine: EngineKind) -> Result<ExitCode> {
    let out = require(&config.out, "out")?.clone();
    let snapshot = analyze(config, engine, Parallelism::Rayon)?;
    let snapshot_path = snapshot.write(&out)?;
    let written = emit_all(&snapshot, &out)?;
    println!(
        "analyzed {} models x {} temperatures, lengths {}..={}",
        snapshot.models.len(),
        snapshot.temperatures.len(),
        snapshot.l_min,
        snapshot.l_max
    );
    println!(
        "wrote {} and {} report files under {}",
        snapshot_path.display(),
        written.len(),
        out.display()
    );
    for note in &snapshot.notes {
        println!("note: {note}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(config: &RunConfig) -> Result<ExitCode> {
    let out = require(&config.out, "out")?.clone();
    let snapshot = AnalysisSnapshot::load(&out)?;
    let written = emit_all(&snapshot, &out)?;
    println!(
        "re-rendered {} report files under {}",
        written.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(config: &RunConfig) -> Result<ExitCode> {
    let store_path = require(&config.store, "store")?;
    let store = RecordStore::open(store_path);
    let mut problems = Vec::new();

    let validation = store.validate()?;
    println!(
        "checked {} records, {} problems",
        validation.records_checked,
        validation.problems.len()
    );
    problems.extend(validation.problems);

    match store.read_run_manifest()? {
        None => problems.push("store has no run.manifest".to_string()),
        Some(manifest) => {
            if let Some(index) = &config.dataset_index {
                let ingest = ingest_paired_corpus(index, manifest.policy, length_filter(config))?;
                let checksum = dataset_checksum(&ingest.pairs);
                if checksum != manifest.dataset_checksum {
                    problems.push(format!(
                        "dataset checksum mismatch: manifest {}, dataset {}",
                        manifest.dataset_checksum, checksum
                    ));
                }
                let models = config.registry.select(&manifest.models)?;
                let chapters: Vec<String> =
                    ingest.pairs.iter().map(|p| p.chapter.clone()).collect();
                let ledger = store.ledger()?;
                let expected = expected_cells(
                    &chapters,
                    &models,
                    &manifest.temperatures,
                    manifest.rounds_t0,
                    manifest.rounds_t1,
                );
                for cell in &expected {
                    if !ledger.contains_key(cell) {
                        problems.push(format!(
                            "ledger is missing {} t={} {} round {}",
                            cell.model, cell.temperature, cell.chapter, cell.round
                        ));
                    }
                }
                println!(
                    "ledger covers {} of {} expected cells",
                    expected.iter().filter(|c| ledger.contains_key(c)).count(),
                    expected.len()
                );
            }
        }
    }

    if problems.is_empty() {
        println!("store is clean");
        Ok(ExitCode::SUCCESS)
    } else {
        for problem in &problems {
            println!("problem: {problem}");
        }
        Ok(ExitCode::from(1))
    }
}

fn cmd_fixtures(config: &RunConfig) -> Result<ExitCode> {
    let out = require(&config.out, "out")?;
    let tree = write_demo_tree(out)?;
    println!("demo tree written to {}", tree.root.display());
    println!("next steps:");
    println!("  spr --config {} ingest", tree.config_path.display());
    println!("  spr --config {} generate", tree.config_path.display());
    println!("  spr --config {} analyze", tree.config_path.display());
    println!("  spr --config {} report", tree.config_path.display());
    println!("  spr --config {} validate", tree.config_path.display());
    Ok(ExitCode::SUCCESS)
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let config = build_config(&cli.flags)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&config),
        Command::Generate => cmd_generate(&config),
        Command::Analyze => cmd_analyze(&config, engine_kind(&cli.flags)?),
        Command::Report => cmd_report(&config),
        Command::Validate => cmd_validate(&config),
        Command::Fixtures => cmd_fixtures(&config),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
