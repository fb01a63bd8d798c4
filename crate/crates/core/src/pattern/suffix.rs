//! Suffix-array and LCP construction over integer token sequences.
//!
//! Prefix-doubling construction, O(n log^2 n) with plain unstable sorts. The
//! corpora indexed here are joined documents of at most a few million tokens,
//! so this is fast enough and easy to trust; correctness is cross-checked by
//! the brute-force oracle tests in the parent module.

/// Sorted suffix start positions of `text`, lexicographic by token id.
pub(crate) fn suffix_array(text: &[u32]) -> Vec<u32> {
    let n = text.len();
    let mut sa: Vec<u32> = (0..n as u32).collect();
    if n <= 1 {
        return sa;
    }

    sa.sort_unstable_by_key(|&i| text[i as usize]);
    let mut rank = vec![0u32; n];
    let mut classes = 0u32;
    for idx in 1..n {
        if text[sa[idx] as usize] != text[sa[idx - 1] as usize] {
            classes += 1;
        }
        rank[sa[idx] as usize] = classes;
    }

    let mut width = 1usize;
    let mut next_rank = vec![0u32; n];
    while (classes as usize) + 1 < n {
        // Key: rank of the first `width` tokens, then rank of the next
        // `width` (suffixes shorter than `width` sort first via 0).
        let key = |i: u32| -> u64 {
            let i = i as usize;
            let tail = if i + width < n {
                rank[i + width] as u64 + 1
            } else {
                0
            };
            ((rank[i] as u64) << 32) | tail
        };
        sa.sort_unstable_by_key(|&i| key(i));

        classes = 0;
        next_rank[sa[0] as usize] = 0;
        for idx in 1..n {
            if key(sa[idx]) != key(sa[idx - 1]) {
                classes += 1;
            }
            next_rank[sa[idx] as usize] = classes;
        }
        std::mem::swap(&mut rank, &mut next_rank);
        width *= 2;
    }
    sa
}

/// LCP array via Kasai's algorithm: `lcp[i]` is the token-wise common prefix
/// length of the suffixes at `sa[i - 1]` and `sa[i]`; `lcp[0]` is 0.
pub(crate) fn lcp_array(text: &[u32], sa: &[u32]) -> Vec<u32> {
    let n = text.len();
    let mut lcp = vec![0u32; n];
    if n == 0 {
        return lcp;
    }
    let mut rank = vec![0u32; n];
    for (order, &pos) in sa.iter().enumerate() {
        rank[pos as usize] = order as u32;
    }
    let mut k = 0usize;
    for i in 0..n {
        let r = rank[i] as usize;
        if r == 0 {
            k = 0;
            continue;
        }
        let j = sa[r - 1] as usize;
        while i + k < n && j + k < n && text[i + k] == text[j + k] {
            k += 1;
        }
        lcp[r] = k as u32;
        k = k.saturating_sub(1);
    }
    lcp
}
