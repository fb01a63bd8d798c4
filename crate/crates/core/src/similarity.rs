//! The similarity percentage ratio (SPR) and per-group mean matrices.
//!
//! SPR of text X against text Y at pattern length l: the percentage of X's
//! word positions covered by the union of the distinct l-word patterns that X
//! and Y share. The value is asymmetric by construction: both texts share
//! the same patterns, but each is measured against its own length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{map_collect, Parallelism};
use crate::pattern::{
    common_patterns_bruteforce, common_patterns_union_bruteforce, coverage_mask, DocId,
    PatternError, PatternIndex,
};
use crate::text::IdSeq;

/// Which pattern-detection route answers the queries. The two routes are
/// implemented independently and are interchangeable everywhere; keeping both
/// wired through the same entry points is what lets tests hold them equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineKind {
    SuffixArray,
    BruteForce,
}

/// Sampling temperature of a paraphrase run. Only 0 and 1 are meaningful for
/// this pipeline; values above one degrade into nonsense output and are not
/// supported.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(into = "u8", try_from = "u8")]
pub enum Temperature {
    Zero,
    One,
}

impl Temperature {
    pub fn as_f64(self) -> f64 {
        match self {
            Temperature::Zero => 0.0,
            Temperature::One => 1.0,
        }
    }

    pub const ALL: [Temperature; 2] = [Temperature::Zero, Temperature::One];
}

impl From<Temperature> for u8 {
    fn from(t: Temperature) -> u8 {
        match t {
            Temperature::Zero => 0,
            Temperature::One => 1,
        }
    }
}

impl TryFrom<u8> for Temperature {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Temperature::Zero),
            1 => Ok(Temperature::One),
            other => Err(format!("unsupported temperature {other}, expected 0 or 1")),
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// One SPR measurement: covered word count over text length, as a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprValue {
    pub value: f64,
    pub covered_words: usize,
    pub text_length: usize,
}

impl SprValue {
    pub fn new(covered_words: usize, text_length: usize) -> Self {
        debug_assert!(covered_words <= text_length);
        let value = if text_length == 0 {
            0.0
        } else {
            100.0 * covered_words as f64 / text_length as f64
        };
        Self {
            value,
            covered_words,
            text_length,
        }
    }
}

/// Row/column identity in an SPR matrix: the source text, one of the numbered
/// paraphrase groups, or the paired control text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GroupLabel {
    Original,
    /// 1-based paraphrase group index (the i-th generated round of each text).
    Paraphrase(usize),
    Control,
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Original => write!(f, "original"),
            GroupLabel::Paraphrase(i) => write!(f, "CGPT_p={i:02}"),
            GroupLabel::Control => write!(f, "control"),
        }
    }
}

impl FromStr for GroupLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "original" => Ok(GroupLabel::Original),
            "control" => Ok(GroupLabel::Control),
            other => other
                .strip_prefix("CGPT_p=")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(GroupLabel::Paraphrase)
                .ok_or_else(|| format!("unrecognized group label {other:?}")),
        }
    }
}

impl From<GroupLabel> for String {
    fn from(label: GroupLabel) -> String {
        label.to_string()
    }
}

impl TryFrom<String> for GroupLabel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("corpus slice contains no documents")]
    EmptyCorpus,
    #[error("document {chapter} is missing text for group {group}")]
    MissingGroupText { chapter: String, group: GroupLabel },
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// SPR of `a` against `b` and of `b` against `a` at pattern length `l`,
/// both directions derived from a single pattern query.
pub fn spr_pair(
    a: &IdSeq,
    b: &IdSeq,
    l: usize,
    engine: EngineKind,
) -> Result<(SprValue, SprValue), SimilarityError> {
    let hits = match engine {
        EngineKind::SuffixArray => {
            let index = PatternIndex::build([a, b])?;
            index.common_patterns(DocId(0), DocId(1), l)?
        }
        EngineKind::BruteForce => common_patterns_bruteforce(a, b, l),
    };
    let mask_a = coverage_mask(a.len(), &hits, DocId(0))?;
    let mask_b = coverage_mask(b.len(), &hits, DocId(1))?;
    Ok((
        SprValue::new(mask_a.covered_count, a.len()),
        SprValue::new(mask_b.covered_count, b.len()),
    ))
}

/// SPR of `target` against the union of patterns it shares with any of
/// `others`. This is the diagonal-cell semantics: a word of `target` counts
/// once if any partner shares a pattern covering it.
pub fn spr_union_group(
    target: &IdSeq,
    others: &[&IdSeq],
    l: usize,
    engine: EngineKind,
) -> Result<SprValue, SimilarityError> {
    if others.is_empty() {
        return Err(SimilarityError::Pattern(PatternError::EmptyOthers));
    }
    let hits = match engine {
        EngineKind::SuffixArray => {
            let index = PatternIndex::build(std::iter::once(target).chain(others.iter().copied()))?;
            let other_ids: Vec<DocId> = (1..=others.len()).map(DocId).collect();
            index.common_patterns_union(DocId(0), &other_ids, l)?
        }
        EngineKind::BruteForce => common_patterns_union_bruteforce(target, others, l),
    };
    let mask = coverage_mask(target.len(), &hits, DocId(0))?;
    Ok(SprValue::new(mask.covered_count, target.len()))
}

/// All texts of one chapter that enter a matrix: the original, the paraphrase
/// groups in round order, and the paired control text.
#[derive(Debug, Clone)]
pub struct GroupedDocument {
    pub chapter: String,
    pub original: IdSeq,
    pub paraphrases: Vec<IdSeq>,
    pub control: IdSeq,
}

impl GroupedDocument {
    fn text(&self, label: GroupLabel) -> &IdSeq {
        match label {
            GroupLabel::Original => &self.original,
            GroupLabel::Paraphrase(i) => &self.paraphrases[i - 1],
            GroupLabel::Control => &self.control,
        }
    }
}

/// The documents feeding one matrix: one model, one temperature, a fixed
/// number of paraphrase groups, every document complete for every group.
#[derive(Debug, Clone)]
pub struct CorpusSlice {
    pub model: String,
    pub temperature: Temperature,
    pub group_count: usize,
    pub documents: Vec<GroupedDocument>,
}

impl CorpusSlice {
    /// Validates completeness: every document must carry exactly
    /// `group_count` paraphrases. Documents arrive already ordered by
    /// chapter key; this order fixes the reduction order of every mean.
    pub fn new(
        model: impl Into<String>,
        temperature: Temperature,
        group_count: usize,
        documents: Vec<GroupedDocument>,
    ) -> Result<Self, SimilarityError> {
        for doc in &documents {
            if doc.paraphrases.len() != group_count {
                return Err(SimilarityError::MissingGroupText {
                    chapter: doc.chapter.clone(),
                    group: GroupLabel::Paraphrase(doc.paraphrases.len() + 1),
                });
            }
        }
        Ok(Self {
            model: model.into(),
            temperature,
            group_count,
            documents,
        })
    }

    /// Matrix label order: original, paraphrase groups ascending, control.
    pub fn labels(&self) -> Vec<GroupLabel> {
        let mut labels = Vec::with_capacity(self.group_count + 2);
        labels.push(GroupLabel::Original);
        labels.extend((1..=self.group_count).map(GroupLabel::Paraphrase));
        labels.push(GroupLabel::Control);
        labels
    }
}

/// One aggregated matrix cell: the mean SPR of row-group texts measured
/// against column-group texts, and how many documents entered the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub mean: f64,
    pub samples: usize,
}

/// Mean SPR values between all group pairs of one (model, temperature) at one
/// pattern length. Rows are the measured (denominator) side, so the matrix is
/// asymmetric; diagonal cells use union-against-all-other-groups semantics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SprMatrix {
    pub model: String,
    pub temperature: Temperature,
    pub pattern_len: usize,
    pub labels: Vec<GroupLabel>,
    pub cells: Vec<Vec<MatrixCell>>,
}

impl SprMatrix {
    pub fn cell(&self, row: GroupLabel, col: GroupLabel) -> Option<&MatrixCell> {
        let r = self.labels.iter().position(|&l| l == row)?;
        let c = self.labels.iter().position(|&l| l == col)?;
        Some(&self.cells[r][c])
    }
}

/// Build the SPR matrix for a single pattern length.
pub fn build_spr_matrix(
    slice: &CorpusSlice,
    l: usize,
    engine: EngineKind,
    par: Parallelism,
) -> Result<SprMatrix, SimilarityError> {
    build_spr_matrices(slice, l, l, engine, par).map(|mut v| v.pop().expect("one matrix"))
}

/// Build SPR matrices for every pattern length in `l_min..=l_max`.
///
/// Documents are independent work items; for the suffix-array engine each
/// document is indexed once and queried for every pair and length. Per-cell
/// means are reduced sequentially in document order, so results do not depend
/// on the parallelism strategy.
pub fn build_spr_matrices(
    slice: &CorpusSlice,
    l_min: usize,
    l_max: usize,
    engine: EngineKind,
    par: Parallelism,
) -> Result<Vec<SprMatrix>, SimilarityError> {
    assert!(l_min >= 1 && l_min <= l_max, "invalid pattern length range");
    if slice.documents.is_empty() {
        return Err(SimilarityError::EmptyCorpus);
    }
    let labels = slice.labels();
    let lengths: Vec<usize> = (l_min..=l_max).collect();

    let per_doc: Vec<Result<DocGrid, SimilarityError>> = map_collect(
        par,
        &slice.documents,
        |doc| document_grid(doc, &labels, &lengths, engine),
    );

    let g = labels.len();
    let mut sums = vec![vec![vec![0.0f64; g]; g]; lengths.len()];
    let mut count = 0usize;
    for grid in per_doc {
        let grid = grid?;
        count += 1;
        for (li, plane) in grid.values.iter().enumerate() {
            for r in 0..g {
                for c in 0..g {
                    sums[li][r][c] += plane[r][c];
                }
            }
        }
    }

    Ok(lengths
        .iter()
        .zip(sums)
        .map(|(&l, plane)| SprMatrix {
            model: slice.model.clone(),
            temperature: slice.temperature,
            pattern_len: l,
            labels: labels.clone(),
            cells: plane
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|sum| MatrixCell {
                            mean: sum / count as f64,
                            samples: count,
                        })
                        .collect()
                })
                .collect(),
        })
        .collect())
}

/// Per-document SPR values, indexed `[length][row][col]`.
struct DocGrid {
    values: Vec<Vec<Vec<f64>>>,
}

fn document_grid(
    doc: &GroupedDocument,
    labels: &[GroupLabel],
    lengths: &[usize],
    engine: EngineKind,
) -> Result<DocGrid, SimilarityError> {
    let g = labels.len();
    let mut values = vec![vec![vec![0.0f64; g]; g]; lengths.len()];

    match engine {
        EngineKind::SuffixArray => {
            let texts: Vec<&IdSeq> = labels.iter().map(|&lb| doc.text(lb)).collect();
            let index = PatternIndex::build(texts.iter().copied())?;
            for i in 0..g {
                for j in (i + 1)..g {
                    for (li, &l) in lengths.iter().enumerate() {
                        let hits = index.common_patterns(DocId(i), DocId(j), l)?;
                        let mask_i = coverage_mask(texts[i].len(), &hits, DocId(i))?;
                        let mask_j = coverage_mask(texts[j].len(), &hits, DocId(j))?;
                        values[li][i][j] = SprValue::new(mask_i.covered_count, texts[i].len()).value;
                        values[li][j][i] = SprValue::new(mask_j.covered_count, texts[j].len()).value;
                    }
                }
            }
            for i in 0..g {
                let others: Vec<DocId> = (0..g).filter(|&j| j != i).map(DocId).collect();
                for (li, &l) in lengths.iter().enumerate() {
                    let hits = index.common_patterns_union(DocId(i), &others, l)?;
                    let mask = coverage_mask(texts[i].len(), &hits, DocId(i))?;
                    values[li][i][i] = SprValue::new(mask.covered_count, texts[i].len()).value;
                }
            }
        }
        EngineKind::BruteForce => {
            let texts: Vec<&IdSeq> = labels.iter().map(|&lb| doc.text(lb)).collect();
            for i in 0..g {
                for j in (i + 1)..g {
                    for (li, &l) in lengths.iter().enumerate() {
                        let (vi, vj) = spr_pair(texts[i], texts[j], l, EngineKind::BruteForce)?;
                        values[li][i][j] = vi.value;
                        values[li][j][i] = vj.value;
                    }
                }
            }
            for i in 0..g {
                let others: Vec<&IdSeq> = (0..g).filter(|&j| j != i).map(|j| texts[j]).collect();
                for (li, &l) in lengths.iter().enumerate() {
                    values[li][i][i] =
                        spr_union_group(texts[i], &others, l, EngineKind::BruteForce)?.value;
                }
            }
        }
    }
    Ok(DocGrid { values })
}
