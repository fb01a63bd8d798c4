//! Core library for measuring word-pattern similarity between texts and for
//! running paraphrase self-similarity experiments against chat-completion APIs.
//!
//! The central metric is the similarity percentage ratio (SPR): the share of a
//! text's words covered by the union of fixed-length word patterns it has in
//! common with another text. Around it sit:
//!
//! - [`text`]: word tokenization and integer interning,
//! - [`pattern`]: suffix-array pattern detection plus an independent
//!   brute-force oracle,
//! - [`similarity`]: SPR values and per-group mean matrices,
//! - [`sweep`]: pattern-length sweeps, temperature spreads, relative means
//!   and trend classification,
//! - [`corpus`]: paired-dataset ingestion, the paraphrase record store and
//!   descriptive statistics,
//! - [`client`]: the chat API client with record/replay transports and
//!   campaign scheduling,
//! - [`sampler`]: reference implementations of temperature softmax and
//!   top-k / top-p filtering,
//! - [`pipeline`] / [`report`]: offline analysis and deterministic file
//!   emission.
//!
//! Heavy loops (matrix cells, length sweeps) run on rayon when the `parallel`
//! feature is enabled (the default) and fall back to plain iteration without
//! it. Outputs are bit-identical either way.

pub mod client;
pub mod clock;
pub mod config;
pub mod corpus;
pub mod fixtures;
pub mod parallel;
pub mod pattern;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod similarity;
pub mod sweep;
pub mod text;

pub use parallel::Parallelism;
pub use pattern::{CoverageMask, DocId, PatternError, PatternHit, PatternIndex};
pub use similarity::{EngineKind, GroupLabel, SprMatrix, SprValue};
pub use text::{IdSeq, TokenSeq, TokenizationPolicy, Vocabulary};
