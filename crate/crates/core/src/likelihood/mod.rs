//! Sequence and continuation log-likelihoods.
//!
//! Two backends share the [`LikelihoodBackend`] contract: a word-level n-gram
//! model with Laplace smoothing ([`NGramModel`]) and a client for a remote
//! completion endpoint that echoes prompt tokens with log-probabilities
//! ([`RemoteScorer`]). All log-probabilities use the natural logarithm and
//! next-token scoring: `log P(text) = Σ_i log P(t_i | t_<i)`.

mod ngram;
mod remote;

pub use ngram::{train_ngram, NGramModel, UNKNOWN_TOKEN};
pub use remote::{ChatFormat, RemoteConfig, RemoteScorer};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::genpipe::ChatMessage;

/// Log-likelihood of a whole text under some backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub text: String,
    pub token_count: usize,
    pub total_log_prob: f64,
}

pub trait LikelihoodBackend: Send + Sync {
    /// Total log-probability of `text` under the backend's own tokenization.
    fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore>;

    /// Total log-probability of `continuation` following the rendered chat context.
    fn score_continuation(&self, context: &[ChatMessage], continuation: &str) -> Result<f64>;
}

impl<B: LikelihoodBackend + ?Sized> LikelihoodBackend for &B {
    fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
        (**self).sequence_log_prob(text)
    }
    fn score_continuation(&self, context: &[ChatMessage], continuation: &str) -> Result<f64> {
        (**self).score_continuation(context, continuation)
    }
}

impl<B: LikelihoodBackend + ?Sized> LikelihoodBackend for Box<B> {
    fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
        (**self).sequence_log_prob(text)
    }
    fn score_continuation(&self, context: &[ChatMessage], continuation: &str) -> Result<f64> {
        (**self).score_continuation(context, continuation)
    }
}

impl<B: LikelihoodBackend + ?Sized> LikelihoodBackend for std::sync::Arc<B> {
    fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
        (**self).sequence_log_prob(text)
    }
    fn score_continuation(&self, context: &[ChatMessage], continuation: &str) -> Result<f64> {
        (**self).score_continuation(context, continuation)
    }
}

/// Sums log-probabilities in a canonical order (ascending).
///
/// Makes the total a function of the multiset of terms, so reordering the
/// tokens of a text under an order-1 model yields bit-identical totals.
pub fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Bundled training texts for the default n-gram scorer.
pub const TOY_CORPUS: &str = include_str!("../../data/toy_corpus.txt");

/// Texts of [`TOY_CORPUS`], skipping comments and blank lines.
pub fn toy_corpus() -> Vec<&'static str> {
    TOY_CORPUS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Order-3, δ = 1 model over the bundled corpus.
pub fn default_scorer() -> NGramModel {
    train_ngram(&toy_corpus(), 3, 1.0).expect("bundled corpus is non-empty")
}

/// Chat messages flattened to text with single-space joins.
pub fn flatten_messages(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
