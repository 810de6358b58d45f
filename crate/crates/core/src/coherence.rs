//! Shuffle-test coherence.
//!
//! A chain's sentences are permuted, every sampled ordering is scored with a
//! [`LikelihoodBackend`], and the original ordering's rank among the sample
//! gives `H = 1 - rank / |sample|`. The rank counts every ordering whose score
//! is `>=` the original's, the original included, so ties count against it.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmotionCategory, EventChain, Method};
use crate::error::{Error, Result};
use crate::genpipe::derive_seed;
use crate::likelihood::LikelihoodBackend;
use crate::scalar::{MeanStd, Scalar};

/// Default number of sampled orderings per chain.
pub const DEFAULT_SAMPLE: usize = 30;

/// Largest sentence count whose permutations can be indexed by `u64`.
pub const MAX_SENTENCES: usize = 20;

/// Distinct sentence orderings; the identity is always first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSample {
    pub orderings: Vec<Vec<usize>>,
    pub includes_original: bool,
    pub seed: u64,
}

impl PermutationSample {
    pub fn len(&self) -> usize {
        self.orderings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orderings.is_empty()
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// The `index`-th permutation of `0..l` in lexicographic order.
fn unrank(l: usize, mut index: u64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..l).collect();
    let mut out = Vec::with_capacity(l);
    for k in (0..l).rev() {
        let f = factorial(k);
        let i = (index / f) as usize;
        index %= f;
        out.push(pool.remove(i));
    }
    out
}

/// Samples `min(target, l!)` distinct permutations of `0..l`, identity first.
///
/// Lexicographic index 0 is the identity; the remaining `l! - 1` indices are
/// drawn without replacement by a partial Fisher–Yates shuffle whose swaps
/// are stored sparsely, so the index space is never materialized.
pub fn sample_permutations(l: usize, target: usize, seed: u64) -> Result<PermutationSample> {
    if l < 2 {
        return Err(Error::validation("sentence_count", "need at least 2 sentences to shuffle"));
    }
    if l > MAX_SENTENCES {
        return Err(Error::validation("sentence_count", format!("at most {MAX_SENTENCES} sentences")));
    }
    if target == 0 {
        return Err(Error::validation("sample_target", "must be at least 1"));
    }
    let total = factorial(l);
    let take = (target as u64).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut orderings = vec![unrank(l, 0)];
    // Indices 1..total live in slots 0..total-1.
    let slots = total - 1;
    for i in 0..take - 1 {
        let j = rng.gen_range(i..slots);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        orderings.push(unrank(l, at_j + 1));
    }
    Ok(PermutationSample {
        orderings,
        includes_original: true,
        seed,
    })
}

/// Rank statistics of one shuffle test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceResult<T> {
    pub chain_id: String,
    pub sample_size: usize,
    pub original_log_prob: f64,
    pub rank: usize,
    pub score: T,
}

/// Log-probability of each ordering's space-joined text.
pub fn ordering_scores<B, S>(backend: &B, sentences: &[S], orderings: &[Vec<usize>]) -> Result<Vec<f64>>
where
    B: LikelihoodBackend + ?Sized,
    S: AsRef<str>,
{
    orderings
        .iter()
        .map(|o| {
            let text = o.iter().map(|&i| sentences[i].as_ref()).collect::<Vec<_>>().join(" ");
            backend.sequence_log_prob(&text).map(|s| s.total_log_prob)
        })
        .collect()
}

/// Rank of the first score among `scores` (number of scores `>=` it).
pub fn rank_of_first(scores: &[f64]) -> usize {
    let original = scores[0];
    scores.iter().filter(|&&s| s >= original).count()
}

/// Shuffle test over an arbitrary sentence list.
pub fn shuffle_test<T, B, S>(backend: &B, id: &str, sentences: &[S], target: usize, seed: u64) -> Result<CoherenceResult<T>>
where
    T: Scalar,
    B: LikelihoodBackend + ?Sized,
    S: AsRef<str>,
{
    let sample = sample_permutations(sentences.len(), target, seed)?;
    let scores = ordering_scores(backend, sentences, &sample.orderings)?;
    let rank = rank_of_first(&scores);
    let n = scores.len();
    Ok(CoherenceResult {
        chain_id: id.to_owned(),
        sample_size: n,
        original_log_prob: scores[0],
        rank,
        score: T::ratio((n - rank) as u64, n as u64),
    })
}

/// Seed of a chain's permutation sample, independent of batch order.
pub fn chain_seed(global: u64, chain_id: &str) -> u64 {
    derive_seed(global, &["coherence", chain_id])
}

/// Shuffle-test coherence of a chain.
pub fn coherence_score<T, B>(backend: &B, chain: &EventChain, sample_target: usize, seed: u64) -> Result<CoherenceResult<T>>
where
    T: Scalar,
    B: LikelihoodBackend + ?Sized,
{
    shuffle_test(backend, &chain.id, &chain.sentences, sample_target, chain_seed(seed, &chain.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceConfig {
    pub sample_target: usize,
    pub seed: u64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            sample_target: DEFAULT_SAMPLE,
            seed: 0,
        }
    }
}

/// Export row for one scored chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRecord {
    pub chain_id: String,
    pub method: Method,
    pub emotion: EmotionCategory,
    pub rank: usize,
    pub sample_size: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFailure {
    pub chain_id: String,
    pub error: String,
}

/// Batch coherence grouped by method and prompted emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSummary {
    pub records: Vec<CoherenceRecord>,
    pub by_cell: BTreeMap<Method, BTreeMap<EmotionCategory, MeanStd>>,
    pub by_method: BTreeMap<Method, MeanStd>,
    pub overall: MeanStd,
    pub failures: Vec<ChainFailure>,
}

/// Scores `chains` in parallel; results do not depend on chain order or scheduling.
pub fn batch_coherence<B>(backend: &B, chains: &[EventChain], config: &CoherenceConfig) -> Result<CoherenceSummary>
where
    B: LikelihoodBackend + ?Sized,
{
    if chains.is_empty() {
        return Err(Error::Empty("chains to score"));
    }
    let outcomes: Vec<_> = chains
        .par_iter()
        .map(|c| (c, coherence_score::<f64, _>(backend, c, config.sample_target, config.seed)))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (chain, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(CoherenceRecord {
                chain_id: r.chain_id,
                method: chain.method,
                emotion: chain.prompted_emotion,
                rank: r.rank,
                sample_size: r.sample_size,
                score: r.score,
            }),
            Err(e) => failures.push(ChainFailure {
                chain_id: chain.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let overall = MeanStd::of(&records.iter().map(|r| r.score).collect::<Vec<_>>())
        .ok_or(Error::Empty("successfully scored chains"))?;
    let mut cells: BTreeMap<Method, BTreeMap<EmotionCategory, Vec<f64>>> = BTreeMap::new();
    for r in &records {
        cells.entry(r.method).or_default().entry(r.emotion).or_default().push(r.score);
    }
    let by_method = cells
        .iter()
        .map(|(&m, per)| {
            let all: Vec<f64> = per.values().flatten().copied().collect();
            (m, MeanStd::of(&all).expect("non-empty group"))
        })
        .collect();
    let by_cell = cells
        .into_iter()
        .map(|(m, per)| {
            let stats = per
                .into_iter()
                .map(|(e, v)| (e, MeanStd::of(&v).expect("non-empty group")))
                .collect();
            (m, stats)
        })
        .collect();
    Ok(CoherenceSummary {
        records,
        by_cell,
        by_method,
        overall,
        failures,
    })
}
