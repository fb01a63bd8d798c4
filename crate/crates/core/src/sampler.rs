//! Reference implementations of the sampling math that shapes LLM output
//! diversity: temperature-scaled softmax, top-k / top-p candidate filtering
//! and seeded inverse-CDF selection.
//!
//! Nothing here touches a model; the module exists so the temperature
//! behavior the rest of the pipeline measures is pinned down by executable,
//! tested definitions rather than prose.

use thiserror::Error;

use crate::rng::SplitMix64;

/// Raw next-token scores, one per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    pub z: Vec<f64>,
}

impl LogitVector {
    pub fn new(z: Vec<f64>) -> Result<Self, SamplerError> {
        if z.is_empty() {
            return Err(SamplerError::EmptyVector);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SamplerError::NonFiniteLogit);
        }
        Ok(Self { z })
    }
}

/// A probability distribution over candidate indices: entries are
/// nonnegative and sum to 1 (within 1e-12 for anything produced here).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    pub p: Vec<f64>,
}

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self, SamplerError> {
        if p.is_empty() {
            return Err(SamplerError::EmptyVector);
        }
        if p.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(SamplerError::NegativeProbability);
        }
        let sum = kahan_sum(&p);
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SamplerError::NotNormalized { sum });
        }
        Ok(Self { p })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// A filtered distribution: the retained candidate indices (into the input
/// vector) and their renormalized probabilities, in descending-probability
/// order with ties broken toward the lower index.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredProbs {
    pub indices: Vec<usize>,
    pub probs: ProbVector,
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("empty vector")]
    EmptyVector,
    #[error("logits must be finite")]
    NonFiniteLogit,
    #[error("probabilities must be nonnegative")]
    NegativeProbability,
    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("temperature must be strictly positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("k must be between 1 and the vector length, got {k} for length {len}")]
    InvalidK { k: usize, len: usize },
    #[error("top-p threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `p_i = exp(z_i / T) / sum_j exp(z_j / T)`, stabilized by subtracting the
/// maximum scaled logit before exponentiation.
///
/// T below 1 widens the gap between probable and improbable candidates and
/// approaches greedy argmax selection as T goes to 0; T = 1 leaves the
/// distribution as scored. T = 0 itself is rejected: it puts zero in a
/// denominator, and callers that want the limit should take the argmax.
pub fn temperature_softmax(z: &LogitVector, temperature: f64) -> Result<ProbVector, SamplerError> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(SamplerError::NonPositiveTemperature(temperature));
    }
    let scaled: Vec<f64> = z.z.iter().map(|&v| v / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&v| (v - max).exp()).collect();
    let sum = kahan_sum(&exps);
    let inv = 1.0 / sum;
    Ok(ProbVector {
        p: exps.into_iter().map(|e| e * inv).collect(),
    })
}

/// Indices of `p` sorted by descending probability, ties toward lower index.
fn ranked_indices(p: &ProbVector) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..p.len()).collect();
    indices.sort_by(|&a, &b| {
        p.p[b]
            .partial_cmp(&p.p[a])
            .expect("probabilities are never NaN")
            .then(a.cmp(&b))
    });
    indices
}

fn renormalize(p: &ProbVector, retained: Vec<usize>) -> FilteredProbs {
    let mass = kahan_sum(&retained.iter().map(|&i| p.p[i]).collect::<Vec<_>>());
    let inv = 1.0 / mass;
    let probs = retained.iter().map(|&i| p.p[i] * inv).collect();
    FilteredProbs {
        indices: retained,
        probs: ProbVector { p: probs },
    }
}

/// Keep the `k` highest-probability candidates and renormalize.
pub fn top_k_filter(p: &ProbVector, k: usize) -> Result<FilteredProbs, SamplerError> {
    if k == 0 || k > p.len() {
        return Err(SamplerError::InvalidK { k, len: p.len() });
    }
    let mut retained = ranked_indices(p);
    retained.truncate(k);
    Ok(renormalize(p, retained))
}

/// Keep the minimal descending-probability prefix whose cumulative mass
/// reaches `threshold` (inclusive), then renormalize.
pub fn top_p_filter(p: &ProbVector, threshold: f64) -> Result<FilteredProbs, SamplerError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SamplerError::InvalidThreshold(threshold));
    }
    let ranked = ranked_indices(p);
    let mut retained = Vec::new();
    let mut cumulative = 0.0f64;
    for &i in &ranked {
        retained.push(i);
        cumulative += p.p[i];
        if cumulative >= threshold {
            break;
        }
    }
    Ok(renormalize(p, retained))
}

/// Draw an index from `p` by inverse CDF with a seeded deterministic
/// generator: same seed, same index, forever.
pub fn sample_next(p: &ProbVector, seed: u64) -> usize {
    let u = SplitMix64::new(seed).next_f64();
    let mut cumulative = 0.0f64;
    for (i, &prob) in p.p.iter().enumerate() {
        cumulative += prob;
        if u < cumulative {
            return i;
        }
    }
    p.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn logits(z: &[f64]) -> LogitVector {
        LogitVector::new(z.to_vec()).unwrap()
    }

    fn argmax(values: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        best
    }

    #[test]
    fn equal_logits_split_evenly() {
        let p = temperature_softmax(&logits(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(p.p, vec![0.5, 0.5]);
    }

    #[test]
    fn ln_two_gives_two_thirds() {
        let p = temperature_softmax(&logits(&[2.0f64.ln(), 0.0]), 1.0).unwrap();
        assert!((p.p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_temperature_is_effectively_argmax() {
        let p = temperature_softmax(&logits(&[3.0, 0.0, 0.0]), 1e-6).unwrap();
        assert!((p.p[0] - 1.0).abs() < 1e-9);
        assert!(p.p[1] < 1e-9);
        assert!(p.p[2] < 1e-9);
    }

    #[test]
    fn nonpositive_temperature_is_rejected() {
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                temperature_softmax(&logits(&[1.0]), t),
                Err(SamplerError::NonPositiveTemperature(_))
            ));
        }
    }

    #[test]
    fn top_k_with_full_length_is_identity() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let f = top_k_filter(&p, 3).unwrap();
        assert_eq!(f.indices, vec![0, 1, 2]);
        for (got, want) in f.probs.p.iter().zip(&p.p) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_two_of_three_renormalizes() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let f = top_k_filter(&p, 2).unwrap();
        assert_eq!(f.indices, vec![0, 1]);
        assert_eq!(f.probs.p, vec![0.625, 0.375]);
    }

    #[test]
    fn top_k_rejects_bad_k() {
        let p = ProbVector::new(vec![1.0]).unwrap();
        assert!(matches!(top_k_filter(&p, 0), Err(SamplerError::InvalidK { .. })));
        assert!(matches!(top_k_filter(&p, 2), Err(SamplerError::InvalidK { .. })));
    }

    #[test]
    fn top_p_keeps_minimal_prefix_inclusive() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        let f = top_p_filter(&p, 0.8).unwrap();
        assert_eq!(f.indices, vec![0, 1]);
        assert_eq!(f.probs.p, vec![0.625, 0.375]);
    }

    #[test]
    fn top_p_threshold_one_retains_everything() {
        let p = ProbVector::new(vec![0.4, 0.35, 0.25]).unwrap();
        let f = top_p_filter(&p, 1.0).unwrap();
        assert_eq!(f.indices.len(), 3);
        for (got, want) in f.probs.p.iter().zip(&p.p) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn top_p_rejects_bad_thresholds() {
        let p = ProbVector::new(vec![1.0]).unwrap();
        for t in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                top_p_filter(&p, t),
                Err(SamplerError::InvalidThreshold(_))
            ));
        }
    }

    #[test]
    fn one_hot_always_samples_that_index() {
        let p = ProbVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        for seed in 0..100 {
            assert_eq!(sample_next(&p, seed), 1);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = ProbVector::new(vec![0.25, 0.25, 0.5]).unwrap();
        for seed in [0u64, 1, 99, u64::MAX] {
            assert_eq!(sample_next(&p, seed), sample_next(&p, seed));
        }
    }

    #[test]
    fn fair_coin_frequencies_close_to_half() {
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let draws = 100_000u64;
        let heads = (0..draws).filter(|&s| sample_next(&p, s) == 0).count();
        let frequency = heads as f64 / draws as f64;
        assert!((frequency - 0.5).abs() < 0.01, "frequency {frequency}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn softmax_sums_to_one(
            z in proptest::collection::vec(-30.0f64..30.0, 1..64),
            t in 0.05f64..4.0,
        ) {
            let p = temperature_softmax(&logits(&z), t).unwrap();
            let sum: f64 = p.p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn temperature_never_changes_the_argmax(
            z in proptest::collection::vec(-20.0f64..20.0, 1..32),
            t in 0.05f64..4.0,
        ) {
            let p = temperature_softmax(&logits(&z), t).unwrap();
            prop_assert_eq!(argmax(&p.p), argmax(&z));
        }

        #[test]
        fn lower_temperature_sharpens_the_peak(
            z in proptest::collection::vec(-20.0f64..20.0, 2..32),
            t in 0.2f64..2.0,
        ) {
            let hot = temperature_softmax(&logits(&z), t).unwrap();
            let cold = temperature_softmax(&logits(&z), t / 2.0).unwrap();
            let i = argmax(&z);
            prop_assert!(cold.p[i] >= hot.p[i] - 1e-12);
        }

        #[test]
        fn top_k_matches_sort_oracle(
            raw in proptest::collection::vec(0.01f64..1.0, 1..24),
            k_seed in 0usize..24,
        ) {
            let total: f64 = raw.iter().sum();
            let p = ProbVector::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let k = 1 + k_seed % p.len();
            let f = top_k_filter(&p, k).unwrap();

            let mut oracle: Vec<usize> = (0..p.len()).collect();
            oracle.sort_by(|&a, &b| p.p[b].partial_cmp(&p.p[a]).unwrap().then(a.cmp(&b)));
            oracle.truncate(k);
            prop_assert_eq!(&f.indices, &oracle);
        }

        #[test]
        fn top_p_matches_cumulative_oracle(
            raw in proptest::collection::vec(0.01f64..1.0, 1..24),
            threshold in 0.05f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            let p = ProbVector::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let f = top_p_filter(&p, threshold).unwrap();

            let mut oracle: Vec<usize> = (0..p.len()).collect();
            oracle.sort_by(|&a, &b| p.p[b].partial_cmp(&p.p[a]).unwrap().then(a.cmp(&b)));
            let mut cumulative = 0.0;
            let mut keep = Vec::new();
            for i in oracle {
                keep.push(i);
                cumulative += p.p[i];
                if cumulative >= threshold {
                    break;
                }
            }
            prop_assert_eq!(&f.indices, &keep);
        }

        #[test]
        fn filters_are_conservative_and_order_preserving(
            raw in proptest::collection::vec(0.01f64..1.0, 2..24),
            k_seed in 0usize..24,
        ) {
            let total: f64 = raw.iter().sum();
            let p = ProbVector::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let k = 1 + k_seed % p.len();
            let f = top_k_filter(&p, k).unwrap();
            // Support subset of the original support.
            prop_assert!(f.indices.iter().all(|&i| i < p.len()));
            // Relative order of retained probabilities is preserved.
            for w in f.probs.p.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let sum: f64 = f.probs.p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
