//! Detection of fixed-length word patterns shared between documents.
//!
//! [`PatternIndex`] joins documents with unique sentinel ids, builds a suffix
//! array plus LCP array over the concatenation, and answers "which distinct
//! l-token sequences occur in both a and b" queries by scanning maximal runs
//! of suffixes whose pairwise LCP is at least l. Every suffix in such a run
//! shares the same l-token prefix, and because each sentinel occurs exactly
//! once in the concatenation, a shared prefix can never contain or cross one.
//!
//! [`common_patterns_bruteforce`] is a deliberately independent oracle for the
//! same queries built on n-gram hash sets; the two implementations are held
//! equal by property tests and the acceptance suite.

mod suffix;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::IdSeq;

/// Position of a document within the set an index was built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocId(pub usize);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc#{}", self.0)
    }
}

/// Default cap on total indexed positions (tokens plus sentinels).
pub const DEFAULT_MAX_POSITIONS: usize = i32::MAX as usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("document set exceeds capacity: {positions} positions > max {max}")]
    CapacityExceeded { positions: usize, max: usize },
    #[error("no documents to index")]
    EmptyDocumentSet,
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("pattern query requires two distinct documents, got {0} twice")]
    IdenticalDocuments(DocId),
    #[error("union query requires a nonempty set of other documents")]
    EmptyOthers,
    #[error("union target {0} must not appear among the other documents")]
    TargetInOthers(DocId),
    #[error("occurrence at offset {offset} with length {len} exceeds document length {doc_len}")]
    OccurrenceOutOfBounds {
        offset: usize,
        len: usize,
        doc_len: usize,
    },
    #[error("pattern length must be at least 1")]
    ZeroPatternLength,
}

/// One distinct repeated pattern: its token-id content and every place it
/// occurs, as (document, token offset) pairs sorted by document then offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternHit {
    pub tokens: Vec<u32>,
    pub occurrences: Vec<(DocId, usize)>,
}

impl PatternHit {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Occurrence offsets restricted to one document.
    pub fn offsets_in(&self, doc: DocId) -> impl Iterator<Item = usize> + '_ {
        self.occurrences
            .iter()
            .filter(move |(d, _)| *d == doc)
            .map(|&(_, off)| off)
    }
}

/// Which token positions of one document are covered by pattern occurrences.
///
/// A position is covered once no matter how many patterns or occurrences
/// overlap it, which is exactly the "non-overlapping" counting the SPR
/// numerator needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMask {
    pub doc: DocId,
    pub covered: Vec<bool>,
    pub covered_count: usize,
}

/// Suffix-array index over a set of documents joined with unique sentinels.
#[derive(Debug, Clone)]
pub struct PatternIndex {
    concat: Vec<u32>,
    sa: Vec<u32>,
    lcp: Vec<u32>,
    doc_starts: Vec<usize>,
    doc_lens: Vec<usize>,
}

impl PatternIndex {
    /// Build with the default position cap.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a IdSeq>) -> Result<Self, PatternError> {
        Self::build_with_capacity(docs, DEFAULT_MAX_POSITIONS)
    }

    /// Build an index over `docs`, failing if tokens plus sentinels exceed
    /// `max_positions`. Sentinel ids are allocated directly above the largest
    /// token id present, one per document, so they collide with nothing.
    pub fn build_with_capacity<'a>(
        docs: impl IntoIterator<Item = &'a IdSeq>,
        max_positions: usize,
    ) -> Result<Self, PatternError> {
        let docs: Vec<&IdSeq> = docs.into_iter().collect();
        if docs.is_empty() {
            return Err(PatternError::EmptyDocumentSet);
        }
        let total_tokens: usize = docs.iter().map(|d| d.len()).sum();
        let positions = total_tokens + docs.len();
        if positions > max_positions {
            return Err(PatternError::CapacityExceeded {
                positions,
                max: max_positions,
            });
        }

        let max_id = docs
            .iter()
            .flat_map(|d| d.ids.iter().copied())
            .max()
            .unwrap_or(0);
        if max_id as u64 + docs.len() as u64 > u32::MAX as u64 {
            return Err(PatternError::CapacityExceeded {
                positions,
                max: max_positions,
            });
        }

        let mut concat = Vec::with_capacity(positions);
        let mut doc_starts = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        for (k, doc) in docs.iter().enumerate() {
            doc_starts.push(concat.len());
            doc_lens.push(doc.len());
            concat.extend_from_slice(&doc.ids);
            concat.push(max_id + 1 + k as u32);
        }

        let sa = suffix::suffix_array(&concat);
        let lcp = suffix::lcp_array(&concat, &sa);
        Ok(Self {
            concat,
            sa,
            lcp,
            doc_starts,
            doc_lens,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_starts.len()
    }

    /// Token length of a document (sentinel excluded).
    pub fn doc_len(&self, doc: DocId) -> Result<usize, PatternError> {
        self.doc_lens
            .get(doc.0)
            .copied()
            .ok_or(PatternError::UnknownDocument(doc))
    }

    fn check_doc(&self, doc: DocId) -> Result<(), PatternError> {
        if doc.0 < self.doc_starts.len() {
            Ok(())
        } else {
            Err(PatternError::UnknownDocument(doc))
        }
    }

    /// Document owning a concatenation position, and the offset within it.
    /// The sentinel position of a document counts as part of that document.
    fn locate(&self, pos: usize) -> (usize, usize) {
        let doc = self.doc_starts.partition_point(|&start| start <= pos) - 1;
        (doc, pos - self.doc_starts[doc])
    }

    /// Distinct `l`-token sequences occurring in both `a` and `b`, each with
    /// its occurrences restricted to those two documents. Patterns come out
    /// in lexicographic token-id order (the suffix-array order).
    pub fn common_patterns(
        &self,
        a: DocId,
        b: DocId,
        l: usize,
    ) -> Result<Vec<PatternHit>, PatternError> {
        self.check_doc(a)?;
        self.check_doc(b)?;
        if a == b {
            return Err(PatternError::IdenticalDocuments(a));
        }
        if l == 0 {
            return Err(PatternError::ZeroPatternLength);
        }
        Ok(self.scan_runs(l, |run_docs| run_docs.contains(&a.0) && run_docs.contains(&b.0), &[a, b]))
    }

    /// Distinct `l`-token sequences shared between `target` and at least one
    /// of `others`, occurrences restricted to `target`.
    pub fn common_patterns_union(
        &self,
        target: DocId,
        others: &[DocId],
        l: usize,
    ) -> Result<Vec<PatternHit>, PatternError> {
        self.check_doc(target)?;
        if others.is_empty() {
            return Err(PatternError::EmptyOthers);
        }
        for &other in others {
            self.check_doc(other)?;
            if other == target {
                return Err(PatternError::TargetInOthers(target));
            }
        }
        if l == 0 {
            return Err(PatternError::ZeroPatternLength);
        }
        let other_set: Vec<usize> = others.iter().map(|d| d.0).collect();
        Ok(self.scan_runs(
            l,
            |run_docs| {
                run_docs.contains(&target.0) && run_docs.iter().any(|d| other_set.contains(d))
            },
            &[target],
        ))
    }

    /// Walk maximal runs of suffix-array-adjacent suffixes whose pairwise
    /// LCP is at least `l`. Each run is one distinct l-gram; `accept`
    /// decides from the set of documents in the run whether to emit it, and
    /// occurrences are kept only for `keep_docs`.
    fn scan_runs(
        &self,
        l: usize,
        accept: impl Fn(&[usize]) -> bool,
        keep_docs: &[DocId],
    ) -> Vec<PatternHit> {
        let n = self.sa.len();
        let mut hits = Vec::new();
        let mut run_start = 0usize;
        let mut idx = 1usize;
        loop {
            let run_ends = idx >= n || (self.lcp[idx] as usize) < l;
            if run_ends {
                if idx - run_start >= 2 {
                    self.emit_run(run_start, idx, l, &accept, keep_docs, &mut hits);
                }
                if idx >= n {
                    break;
                }
                run_start = idx;
            }
            idx += 1;
        }
        hits
    }

    fn emit_run(
        &self,
        start: usize,
        end: usize,
        l: usize,
        accept: &impl Fn(&[usize]) -> bool,
        keep_docs: &[DocId],
        hits: &mut Vec<PatternHit>,
    ) {
        let mut run_docs: Vec<usize> = Vec::with_capacity(end - start);
        let mut occurrences: Vec<(usize, usize)> = Vec::with_capacity(end - start);
        for &pos in &self.sa[start..end] {
            let (doc, offset) = self.locate(pos as usize);
            debug_assert!(offset + l <= self.doc_lens[doc], "run prefix crossed a sentinel");
            if !run_docs.contains(&doc) {
                run_docs.push(doc);
            }
            occurrences.push((doc, offset));
        }
        if !accept(&run_docs) {
            return;
        }
        let mut kept: Vec<(DocId, usize)> = occurrences
            .into_iter()
            .filter(|(doc, _)| keep_docs.iter().any(|k| k.0 == *doc))
            .map(|(doc, off)| (DocId(doc), off))
            .collect();
        kept.sort_unstable();
        let first = self.sa[start] as usize;
        hits.push(PatternHit {
            tokens: self.concat[first..first + l].to_vec(),
            occurrences: kept,
        });
    }

    /// Exhaustive structural check used by tests: the suffix array is a
    /// permutation in strictly increasing suffix order, and every LCP entry
    /// equals the directly compared prefix length.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.concat.len();
        if self.sa.len() != n || self.lcp.len() != n {
            return Err("array length mismatch".into());
        }
        let mut seen = vec![false; n];
        for &pos in &self.sa {
            let pos = pos as usize;
            if pos >= n || seen[pos] {
                return Err(format!("suffix array is not a permutation at {pos}"));
            }
            seen[pos] = true;
        }
        for i in 1..n {
            let prev = &self.concat[self.sa[i - 1] as usize..];
            let cur = &self.concat[self.sa[i] as usize..];
            if prev >= cur {
                return Err(format!("suffixes out of order at rank {i}"));
            }
            let expect = prev.iter().zip(cur).take_while(|(x, y)| x == y).count();
            if self.lcp[i] as usize != expect {
                return Err(format!(
                    "lcp[{i}] = {} but direct comparison gives {expect}",
                    self.lcp[i]
                ));
            }
        }
        Ok(())
    }
}

/// Mark every position of `doc` covered by some occurrence of `hits`.
pub fn coverage_mask(
    doc_len: usize,
    hits: &[PatternHit],
    doc: DocId,
) -> Result<CoverageMask, PatternError> {
    let mut covered = vec![false; doc_len];
    for hit in hits {
        let len = hit.len();
        for offset in hit.offsets_in(doc) {
            if offset + len > doc_len {
                return Err(PatternError::OccurrenceOutOfBounds {
                    offset,
                    len,
                    doc_len,
                });
            }
            covered[offset..offset + len].iter_mut().for_each(|c| *c = true);
        }
    }
    let covered_count = covered.iter().filter(|&&c| c).count();
    Ok(CoverageMask {
        doc,
        covered,
        covered_count,
    })
}

/// Independent oracle for [`PatternIndex::common_patterns`] on the document
/// pair (`a` as [`DocId`] 0, `b` as [`DocId`] 1): n-gram hash-set
/// intersection, no suffix array involved. Output is sorted the same way so
/// results compare with `==`.
pub fn common_patterns_bruteforce(a: &IdSeq, b: &IdSeq, l: usize) -> Vec<PatternHit> {
    if l == 0 {
        return Vec::new();
    }
    let grams_a = collect_grams(&a.ids, l);
    let grams_b = collect_grams(&b.ids, l);

    let mut hits: Vec<PatternHit> = grams_a
        .iter()
        .filter_map(|(gram, offs_a)| {
            grams_b.get(gram).map(|offs_b| {
                let mut occurrences: Vec<(DocId, usize)> =
                    offs_a.iter().map(|&o| (DocId(0), o)).collect();
                occurrences.extend(offs_b.iter().map(|&o| (DocId(1), o)));
                PatternHit {
                    tokens: gram.to_vec(),
                    occurrences,
                }
            })
        })
        .collect();
    hits.sort_unstable_by(|x, y| x.tokens.cmp(&y.tokens));
    hits
}

/// Brute-force union analogue of [`PatternIndex::common_patterns_union`]:
/// the set union of pairwise brute-force results against each of `others`,
/// with occurrences restricted to the target (as [`DocId`] 0).
pub fn common_patterns_union_bruteforce(
    target: &IdSeq,
    others: &[&IdSeq],
    l: usize,
) -> Vec<PatternHit> {
    let mut by_content: HashMap<Vec<u32>, Vec<(DocId, usize)>> = HashMap::new();
    for other in others {
        for hit in common_patterns_bruteforce(target, other, l) {
            let target_occs: Vec<(DocId, usize)> =
                hit.offsets_in(DocId(0)).map(|o| (DocId(0), o)).collect();
            by_content.entry(hit.tokens).or_insert(target_occs);
        }
    }
    let mut hits: Vec<PatternHit> = by_content
        .into_iter()
        .map(|(tokens, occurrences)| PatternHit {
            tokens,
            occurrences,
        })
        .collect();
    hits.sort_unstable_by(|x, y| x.tokens.cmp(&y.tokens));
    hits
}

fn collect_grams(ids: &[u32], l: usize) -> HashMap<&[u32], Vec<usize>> {
    let mut grams: HashMap<&[u32], Vec<usize>> = HashMap::new();
    if ids.len() >= l {
        for (offset, gram) in ids.windows(l).enumerate() {
            grams.entry(gram).or_default().push(offset);
        }
    }
    grams
}
