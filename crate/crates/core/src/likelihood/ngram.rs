use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{canonical_sum, flatten_messages, LikelihoodBackend, SequenceScore};
use crate::error::{Error, Result};
use crate::genpipe::ChatMessage;
use crate::textstats::tokenize;

/// Reserved vocabulary entry for tokens unseen in training.
pub const UNKNOWN_TOKEN: &str = "<unk>";

const FORMAT_HEADER: &str = "ngram-lm v1";

type TokenId = u32;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// A word-level n-gram model with add-δ smoothing over `vocabulary ∪ {<unk>}`.
///
/// Counts are kept for every context length `0..order`, so the first tokens of
/// a text are scored with the shorter contexts that precede them. A context
/// never seen in training falls back to its longest seen suffix (ultimately the
/// empty context), so each conditional is still a smoothed distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    delta: f64,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

/// Trains a model on the tokenized `corpus`.
pub fn train_ngram<S: AsRef<str>>(corpus: &[S], order: usize, delta: f64) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::validation("order", "must be >= 1"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::validation("delta", "must be a positive finite number"));
    }
    let docs: Vec<Vec<String>> = corpus
        .iter()
        .map(|t| tokenize(t.as_ref()).into_inner())
        .filter(|t| !t.is_empty())
        .collect();
    if docs.is_empty() {
        return Err(Error::Empty("n-gram training corpus"));
    }
    let mut vocab: Vec<String> = docs.iter().flatten().cloned().collect();
    vocab.sort();
    vocab.dedup();
    let index: HashMap<String, TokenId> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as TokenId))
        .collect();
    let mut model = NGramModel {
        order,
        delta,
        vocab,
        index,
        counts: HashMap::new(),
    };
    for doc in &docs {
        let ids: Vec<TokenId> = doc.iter().map(|t| model.index[t]).collect();
        for i in 0..ids.len() {
            for k in 0..order.min(i + 1) {
                let ctx = ids[i - k..i].to_vec();
                let entry = model.counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(ids[i]).or_default() += 1;
            }
        }
    }
    Ok(model)
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Vocabulary size including the unknown token.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() + 1
    }

    fn unk_id(&self) -> TokenId {
        self.vocab.len() as TokenId
    }

    fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or_else(|| self.unk_id())
    }

    /// Token ids of `text` under the model's tokenizer.
    fn ids(&self, text: &str) -> Vec<TokenId> {
        tokenize(text).tokens().iter().map(|t| self.id(t)).collect()
    }

    /// Every vocabulary entry, with the unknown token last.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str).chain(std::iter::once(UNKNOWN_TOKEN))
    }

    fn prob_ids(&self, context: &[TokenId], token: TokenId) -> f64 {
        let v = self.vocab_size() as f64;
        let longest = context.len().min(self.order - 1);
        for k in (0..=longest).rev() {
            if let Some(c) = self.counts.get(&context[context.len() - k..]) {
                let n = c.next.get(&token).copied().unwrap_or(0) as f64;
                return (n + self.delta) / (c.total as f64 + self.delta * v);
            }
        }
        1.0 / v
    }

    /// Smoothed `P(token | context)`; the context is truncated to its last `order-1` tokens.
    pub fn prob(&self, context: &[&str], token: &str) -> f64 {
        let ctx: Vec<TokenId> = context.iter().map(|t| self.id(t)).collect();
        self.prob_ids(&ctx, self.id(token))
    }

    /// Per-token natural-log probabilities of an already tokenized sequence.
    pub fn token_log_probs(&self, tokens: &[&str]) -> Vec<f64> {
        let ids: Vec<TokenId> = tokens.iter().map(|t| self.id(t)).collect();
        (0..ids.len()).map(|i| self.prob_ids(&ids[..i], ids[i]).ln()).collect()
    }

    /// Serializes counts as a versioned, line-oriented text listing.
    ///
    /// ```text
    /// ngram-lm v1
    /// order <n>
    /// delta <δ>
    /// vocab <count>
    /// <token>            (one per line, sorted)
    /// counts <count>
    /// <context tokens space-joined>\t<token>\t<count>
    /// ```
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, &str, u64)> = Vec::new();
        for (ctx, c) in &self.counts {
            let ctx_text = ctx
                .iter()
                .map(|&i| self.vocab[i as usize].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            for (&tok, &n) in &c.next {
                rows.push((ctx_text.clone(), self.vocab[tok as usize].as_str(), n));
            }
        }
        rows.sort();
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "order {}", self.order);
        let _ = writeln!(out, "delta {}", self.delta);
        let _ = writeln!(out, "vocab {}", self.vocab.len());
        for t in &self.vocab {
            let _ = writeln!(out, "{t}");
        }
        let _ = writeln!(out, "counts {}", rows.len());
        for (ctx, tok, n) in rows {
            let _ = writeln!(out, "{ctx}\t{tok}\t{n}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::validation("ngram model", msg);
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("missing or unsupported header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name}")))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {name}, got {line:?}")))
        };
        let order: usize = field("order")?.parse().map_err(|e| bad(format!("order: {e}")))?;
        let delta: f64 = field("delta")?.parse().map_err(|e| bad(format!("delta: {e}")))?;
        let nvocab: usize = field("vocab")?.parse().map_err(|e| bad(format!("vocab: {e}")))?;
        let mut vocab = Vec::with_capacity(nvocab);
        for _ in 0..nvocab {
            vocab.push(lines.next().ok_or_else(|| bad("truncated vocabulary".into()))?.to_owned());
        }
        let ncounts: usize = {
            let line = lines.next().ok_or_else(|| bad("missing counts".into()))?;
            line.strip_prefix("counts ")
                .ok_or_else(|| bad(format!("expected counts, got {line:?}")))?
                .parse()
                .map_err(|e| bad(format!("counts: {e}")))?
        };
        if order == 0 || !(delta > 0.0) {
            return Err(bad("order must be >= 1 and delta > 0".into()));
        }
        let index: HashMap<String, TokenId> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        let lookup = |t: &str| index.get(t).copied().ok_or_else(|| bad(format!("unknown token {t:?}")));
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for _ in 0..ncounts {
            let line = lines.next().ok_or_else(|| bad("truncated counts".into()))?;
            let mut parts = line.split('\t');
            let (ctx, tok, n) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(t), Some(n)) => (c, t, n),
                _ => return Err(bad(format!("malformed count line {line:?}"))),
            };
            let ctx_ids = ctx
                .split_whitespace()
                .map(lookup)
                .collect::<Result<Vec<_>>>()?;
            let n: u64 = n.parse().map_err(|e| bad(format!("count: {e}")))?;
            let entry = counts.entry(ctx_ids).or_default();
            entry.total += n;
            *entry.next.entry(lookup(tok)?).or_default() += n;
        }
        Ok(Self {
            order,
            delta,
            vocab,
            index,
            counts,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Number of distinct contexts per length, for diagnostics.
    pub fn context_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for ctx in self.counts.keys() {
            *h.entry(ctx.len()).or_default() += 1;
        }
        h
    }
}

impl LikelihoodBackend for NGramModel {
    fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
        let ids = self.ids(text);
        if ids.is_empty() {
            return Err(Error::Empty("text to score"));
        }
        let terms = (0..ids.len()).map(|i| self.prob_ids(&ids[..i], ids[i]).ln()).collect();
        Ok(SequenceScore {
            text: text.to_owned(),
            token_count: ids.len(),
            total_log_prob: canonical_sum(terms),
        })
    }

    fn score_continuation(&self, context: &[ChatMessage], continuation: &str) -> Result<f64> {
        let cont = self.ids(continuation);
        if cont.is_empty() {
            return Err(Error::Empty("continuation"));
        }
        let mut ids = self.ids(&flatten_messages(context));
        let start = ids.len();
        ids.extend(cont);
        let terms = (start..ids.len()).map(|i| self.prob_ids(&ids[..i], ids[i]).ln()).collect();
        Ok(canonical_sum(terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpipe::Role;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bigram_hand_counts() {
        let m = train_ngram(&["a b", "a b"], 2, 1.0).unwrap();
        assert_eq!(m.vocab_size(), 3);
        // (c(a,b) + δ) / (c(a) + δV) = 3/5
        assert_relative_eq!(m.prob(&["a"], "b"), 3.0 / 5.0, epsilon = 1e-15);
        // unigram: (2 + 1) / (4 + 3)
        assert_relative_eq!(m.prob(&[], "a"), 3.0 / 7.0, epsilon = 1e-15);
        let s = m.sequence_log_prob("a b").unwrap();
        assert_eq!(s.token_count, 2);
        assert_relative_eq!(s.total_log_prob, (3.0f64 / 7.0).ln() + (3.0f64 / 5.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn word_order_matters_for_bigrams() {
        let m = train_ngram(&["a b", "a b"], 2, 1.0).unwrap();
        let ab = m.sequence_log_prob("a b").unwrap().total_log_prob;
        let ba = m.sequence_log_prob("b a").unwrap().total_log_prob;
        // "b" never precedes anything, so P(a|b) backs off to P(a) = 3/7
        assert_relative_eq!(ba, 2.0 * (3.0f64 / 7.0).ln(), epsilon = 1e-12);
        assert!(ab > ba);
    }

    #[test]
    fn order_one_is_context_free() {
        let m = train_ngram(&["a b b", "c"], 1, 1.0).unwrap();
        assert_eq!(m.prob(&["a"], "b"), m.prob(&[], "b"));
        assert_eq!(m.prob(&["c", "c"], "b"), m.prob(&[], "b"));
        let x = m.sequence_log_prob("a b c").unwrap().total_log_prob;
        let y = m.sequence_log_prob("c a b").unwrap().total_log_prob;
        assert_eq!(x.to_bits(), y.to_bits());
    }

    #[test]
    fn uniform_unigram() {
        // equal counts for every vocabulary token and δ = 1 gives P = (1+1)/(3+4) for seen
        // tokens and 1/7 for unknown ones; a model with no tokens is not trainable.
        let m = train_ngram(&["x y z"], 1, 1.0).unwrap();
        let v = m.vocab_size() as f64;
        assert_eq!(v, 4.0);
        let s = m.sequence_log_prob("x y z").unwrap();
        assert_relative_eq!(s.total_log_prob, 3.0 * (2.0f64 / 7.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn unseen_context_backs_off_to_suffix() {
        let m = train_ngram(&["a b c"], 3, 0.5).unwrap();
        assert_eq!(m.prob(&["zz", "qq"], "a"), m.prob(&[], "a"));
        assert_eq!(m.prob(&["zz", "b"], "c"), m.prob(&["b"], "c"));
        assert_eq!(m.prob(&["a", "b"], "c"), (1.0 + 0.5) / (1.0 + 0.5 * 4.0));
    }

    #[test]
    fn training_errors() {
        assert!(matches!(train_ngram::<&str>(&[], 2, 1.0), Err(Error::Empty(_))));
        assert!(matches!(train_ngram(&["...", " "], 2, 1.0), Err(Error::Empty(_))));
        assert!(train_ngram(&["a"], 0, 1.0).is_err());
        assert!(train_ngram(&["a"], 2, 0.0).is_err());
    }

    #[test]
    fn deterministic_training() {
        let corpus = ["the cat sat", "the dog sat down", "a cat"];
        let a = train_ngram(&corpus, 3, 1.0).unwrap();
        let b = train_ngram(&corpus, 3, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn text_format_round_trips() {
        let m = train_ngram(&["the cat sat", "the dog sat down", "a cat"], 3, 0.25).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("ngram-lm v1\norder 3\ndelta 0.25\n"));
        let back = NGramModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert!(NGramModel::from_text("ngram-lm v9\n").is_err());
    }

    #[test]
    fn empty_inputs_are_errors() {
        let m = train_ngram(&["joy"], 2, 1.0).unwrap();
        assert!(m.sequence_log_prob(" .. ").is_err());
        assert!(m.score_continuation(&[], "").is_err());
    }

    #[test]
    fn continuation_prefers_trained_label() {
        let m = train_ngram(&["joy joy joy"], 2, 1.0).unwrap();
        let ctx = [ChatMessage::new(Role::User, "what emotion")];
        let joy = m.score_continuation(&ctx, "joy").unwrap();
        let sad = m.score_continuation(&ctx, "sadness").unwrap();
        assert!(joy > sad);
    }

    #[test]
    fn concatenation_is_additive() {
        let m = train_ngram(&["a b c a b", "c b a"], 3, 1.0).unwrap();
        let ctx = [ChatMessage::new(Role::User, "a b")];
        let whole = m.sequence_log_prob("a b c a").unwrap().total_log_prob;
        let head = m.sequence_log_prob("a b").unwrap().total_log_prob;
        let tail = m.score_continuation(&ctx, "c a").unwrap();
        assert_relative_eq!(whole, head + tail, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn conditionals_normalize(ctx in prop::collection::vec(0usize..8, 0..4), order in 1usize..4) {
            let words = ["a", "b", "c", "d", "e", "f", "zz", "qq"];
            let m = train_ngram(&["a b c d a b", "e f a c", "b b b d"], order, 0.7).unwrap();
            let context: Vec<&str> = ctx.iter().map(|&i| words[i]).collect();
            let total: f64 = m.vocabulary().map(|t| m.prob(&context, t)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
        }

        #[test]
        fn scores_are_finite_log_probs(text in "[a-f ]{1,30}") {
            let m = train_ngram(&["a b c d a b", "e f a c"], 3, 1.0).unwrap();
            if let Ok(s) = m.sequence_log_prob(&text) {
                prop_assert!(s.total_log_prob.is_finite());
                prop_assert!(s.total_log_prob <= 0.0);
                prop_assert!(s.token_count >= 1);
            }
        }
    }
}
