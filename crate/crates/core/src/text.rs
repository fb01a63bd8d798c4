//! Word tokenization and vocabulary interning.
//!
//! Texts are compared at the word level, so everything downstream works on
//! sequences of word tokens interned to dense integer ids. The policy applied
//! here is the single place where raw text is normalized; all documents in one
//! run must use the same policy or their patterns will not be comparable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Integer id of an interned word token.
pub type TokenId = u32;

/// How raw text is turned into word tokens.
///
/// The default policy lowercases, trims punctuation from token edges and
/// treats any Unicode whitespace run as a single separator. Punctuation
/// *inside* a word ("hunter's") is kept, so possessives and contractions stay
/// one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizationPolicy {
    /// Case-fold tokens to lowercase.
    pub lowercase: bool,
    /// Trim non-alphanumeric characters from token edges and drop tokens that
    /// become empty (standalone punctuation).
    pub strip_punctuation: bool,
    /// Treat every Unicode whitespace character as a separator. When false,
    /// only ASCII whitespace separates tokens, so e.g. non-breaking spaces are
    /// kept inside tokens.
    pub collapse_whitespace: bool,
}

impl Default for TokenizationPolicy {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            collapse_whitespace: true,
        }
    }
}

/// A document as an ordered sequence of word tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub source_id: String,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>, source_id: impl Into<String>) -> Self {
        Self {
            tokens,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A document encoded as interned token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdSeq {
    pub ids: Vec<TokenId>,
    pub source_id: String,
}

impl IdSeq {
    pub fn new(ids: Vec<TokenId>, source_id: impl Into<String>) -> Self {
        Self {
            ids,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Bijection between distinct token strings and dense ids starting at 0.
///
/// Ids are assigned in first-appearance order, so vocabulary construction is
/// deterministic for a given input order. Every id below `len()` maps to a
/// token; ids at or above `len()` are free for use as document sentinels.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("unknown token {token:?} at position {position}")]
    UnknownToken { token: String, position: usize },
    #[error("unknown token id {0}")]
    UnknownId(TokenId),
}

/// Normalize `raw` and split it into word tokens under `policy`.
///
/// Steps, in order: Unicode canonical composition, whitespace split,
/// optional lowercasing, optional edge-punctuation trimming. Empty input
/// yields an empty sequence.
pub fn normalize_and_tokenize(
    raw: &str,
    policy: TokenizationPolicy,
    source_id: impl Into<String>,
) -> TokenSeq {
    let normalized: String = raw.nfc().collect();
    let pieces: Vec<&str> = if policy.collapse_whitespace {
        normalized.split_whitespace().collect()
    } else {
        normalized
            .split(|c: char| c.is_ascii_whitespace())
            .filter(|s| !s.is_empty())
            .collect()
    };

    let mut tokens = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let mut token = if policy.strip_punctuation {
            piece.trim_matches(|c: char| !c.is_alphanumeric())
        } else {
            piece
        };
        if token.is_empty() {
            continue;
        }
        let owned;
        if policy.lowercase {
            owned = token.to_lowercase();
            token = &owned;
        }
        tokens.push(token.to_string());
    }
    TokenSeq::new(tokens, source_id)
}

/// Intern every distinct token of `seqs`, in first-appearance order.
pub fn build_vocabulary<'a>(seqs: impl IntoIterator<Item = &'a TokenSeq>) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    for seq in seqs {
        for token in &seq.tokens {
            vocab.intern(token);
        }
    }
    vocab
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Id for `token`, interning it if new.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as TokenId;
        self.token_to_id.insert(token.to_string(), id);
        self.id_to_token.push(token.to_string());
        id
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Positionwise id encoding of `seq`. Length is preserved.
    pub fn encode(&self, seq: &TokenSeq) -> Result<IdSeq, TextError> {
        let mut ids = Vec::with_capacity(seq.tokens.len());
        for (position, token) in seq.tokens.iter().enumerate() {
            match self.id_of(token) {
                Some(id) => ids.push(id),
                None => {
                    return Err(TextError::UnknownToken {
                        token: token.clone(),
                        position,
                    })
                }
            }
        }
        Ok(IdSeq::new(ids, seq.source_id.clone()))
    }

    /// Inverse of [`Vocabulary::encode`].
    pub fn decode(&self, seq: &IdSeq) -> Result<TokenSeq, TextError> {
        let mut tokens = Vec::with_capacity(seq.ids.len());
        for &id in &seq.ids {
            match self.token_of(id) {
                Some(token) => tokens.push(token.to_string()),
                None => return Err(TextError::UnknownId(id)),
            }
        }
        Ok(TokenSeq::new(tokens, seq.source_id.clone()))
    }
}

/// Convenience: tokenize then intern into an existing vocabulary.
pub fn tokenize_and_encode(
    raw: &str,
    policy: TokenizationPolicy,
    vocab: &mut Vocabulary,
    source_id: impl Into<String>,
) -> IdSeq {
    let seq = normalize_and_tokenize(raw, policy, source_id);
    let ids = seq.tokens.iter().map(|t| vocab.intern(t)).collect();
    IdSeq::new(ids, seq.source_id)
}
