//! Tokenization, Jaccard diversity, leakage detection and length statistics.
//!
//! Tokens are produced by deleting every punctuation or symbol character,
//! lowercasing and splitting on whitespace. Apostrophes and hyphens are deleted
//! rather than treated as separators, so `company's` becomes `companys` and
//! `no-emotion` becomes `noemotion`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmotionCategory, EventChain, Method, BACKSTORY_LEN};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const BUILTIN_LEXICON: &str = include_str!("../data/synonyms.tsv");

/// Ordered lowercase tokens without punctuation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn types(&self) -> HashSet<&str> {
        self.0.iter().map(String::as_str).collect()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

pub fn tokenize(text: &str) -> TokenList {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    TokenList(cleaned.split_whitespace().map(str::to_owned).collect())
}

/// Jaccard similarity of the token-type sets of `a` and `b`.
pub fn jaccard<T: Scalar>(a: &TokenList, b: &TokenList) -> Result<T> {
    let (ta, tb) = (a.types(), b.types());
    let union = ta.union(&tb).count();
    if union == 0 {
        return Err(Error::Undefined("jaccard similarity of two empty token lists"));
    }
    let inter = ta.intersection(&tb).count();
    Ok(T::ratio(inter as u64, union as u64))
}

/// One minus the mean Jaccard similarity over all `n²` ordered pairs, self-pairs included.
pub fn diversity<T: Scalar>(items: &[TokenList]) -> Result<T> {
    if items.is_empty() {
        return Err(Error::Empty("diversity needs at least one token list"));
    }
    if items.iter().any(TokenList::is_empty) {
        return Err(Error::Empty("diversity member token list"));
    }
    let n = items.len() as u64;
    let mut total = T::zero();
    for a in items {
        for b in items {
            total = total + jaccard::<T>(a, b)?;
        }
    }
    Ok(T::one() - total / T::from_count(n * n))
}

/// Per-emotion term lists used to detect emotion leakage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<EmotionCategory, Vec<String>>,
}

impl SynonymLexicon {
    /// The shipped lexicon: 25 synonyms per category plus the category word.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON).expect("bundled lexicon parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `emotion<TAB>term, term, ...` lines. `#` starts a comment line.
    ///
    /// The category word is prepended to each listed entry. Categories without a
    /// line get an empty term list.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<EmotionCategory, Vec<String>> =
            EmotionCategory::ALL.into_iter().map(|e| (e, Vec::new())).collect();
        for line in text.lines() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (name, terms) = line
                .split_once('\t')
                .ok_or_else(|| Error::validation("lexicon", format!("missing tab in {line:?}")))?;
            let emotion: EmotionCategory = name.parse()?;
            let list = entries.get_mut(&emotion).expect("all categories present");
            list.push(emotion.as_str().to_owned());
            list.extend(
                terms
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_owned),
            );
        }
        Ok(Self { entries })
    }

    pub fn from_entries(entries: BTreeMap<EmotionCategory, Vec<String>>) -> Self {
        let mut full: BTreeMap<_, _> =
            EmotionCategory::ALL.into_iter().map(|e| (e, Vec::new())).collect();
        full.extend(entries);
        Self { entries: full }
    }

    pub fn terms(&self, emotion: EmotionCategory) -> &[String] {
        self.entries.get(&emotion).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// A lexicon term found in a backstory sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakMatch {
    pub term: String,
    /// 1-based sentence position.
    pub sentence: usize,
    /// 0-based token offset inside the sentence.
    pub token: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakReport {
    pub chain_id: String,
    pub method: Method,
    pub emotion: EmotionCategory,
    pub matches: Vec<LeakMatch>,
}

impl LeakReport {
    pub fn leaks(&self) -> bool {
        !self.matches.is_empty()
    }
}

/// Scans the backstory sentences for the prompted emotion's terms.
///
/// Terms are tokenized like the text and matched as contiguous token runs, so
/// multi-word terms must appear verbatim and no stemming takes place.
pub fn leakage_check(chain: &EventChain, lexicon: &SynonymLexicon) -> LeakReport {
    let terms: Vec<(String, Vec<String>)> = lexicon
        .terms(chain.prompted_emotion)
        .iter()
        .map(|t| (t.clone(), tokenize(t).into_inner()))
        .filter(|(_, toks)| !toks.is_empty())
        .collect();
    let mut matches = Vec::new();
    for (si, sentence) in chain.backstory().iter().enumerate() {
        let toks = tokenize(sentence).into_inner();
        for start in 0..toks.len() {
            for (term, term_toks) in &terms {
                if toks[start..].starts_with(term_toks) {
                    matches.push(LeakMatch {
                        term: term.clone(),
                        sentence: si + 1,
                        token: start,
                    });
                }
            }
        }
    }
    LeakReport {
        chain_id: chain.id.clone(),
        method: chain.method,
        emotion: chain.prompted_emotion,
        matches,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageRate {
    pub leaking: usize,
    pub total: usize,
    pub rate: f64,
}

/// Number and share of chains with at least one leak, per method.
pub fn leakage_rate(chains: &[EventChain], lexicon: &SynonymLexicon) -> BTreeMap<Method, LeakageRate> {
    let mut counts: BTreeMap<Method, (usize, usize)> = BTreeMap::new();
    for chain in chains {
        let entry = counts.entry(chain.method).or_default();
        entry.1 += 1;
        if leakage_check(chain, lexicon).leaks() {
            entry.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(m, (leaking, total))| {
            (
                m,
                LeakageRate {
                    leaking,
                    total,
                    rate: leaking as f64 / total as f64,
                },
            )
        })
        .collect()
}

/// Token frequencies, descending by count and then alphabetically, stopwords removed.
pub fn unigram_counts<S: AsRef<str>>(texts: &[S], stopwords: &HashSet<String>) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in tokenize(text.as_ref()).into_inner() {
            if !stopwords.contains(&tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// A small English stopword list for unigram tables.
pub fn default_stopwords() -> HashSet<String> {
    [
        "a", "an", "the", "and", "or", "but", "i", "me", "my", "we", "our", "you", "he", "she",
        "it", "its", "they", "them", "their", "his", "her", "to", "of", "in", "on", "at", "for",
        "with", "by", "from", "as", "into", "that", "this", "was", "were", "is", "are", "be",
        "been", "had", "has", "have", "did", "do", "not", "so", "up", "out", "before", "after",
        "while", "which", "who", "would", "could", "about", "over",
    ]
    .into_iter()
    .map(str::to_owned)
    .collect()
}

/// Mean backstory sentence lengths for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub chains: usize,
    pub position_means: [f64; BACKSTORY_LEN],
    /// Mean total backstory length.
    pub total_mean: f64,
}

pub fn length_stats(chains: &[EventChain]) -> Result<BTreeMap<Method, LengthStats>> {
    if chains.is_empty() {
        return Err(Error::Empty("length statistics need at least one chain"));
    }
    let mut sums: BTreeMap<Method, ([usize; BACKSTORY_LEN], usize)> = BTreeMap::new();
    for chain in chains {
        let entry = sums.entry(chain.method).or_default();
        for (i, s) in chain.backstory().iter().enumerate() {
            entry.0[i] += tokenize(s).len();
        }
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(m, (pos, n))| {
            let position_means = pos.map(|s| s as f64 / n as f64);
            let total = pos.iter().sum::<usize>() as f64 / n as f64;
            (
                m,
                LengthStats {
                    chains: n,
                    position_means,
                    total_mean: total,
                },
            )
        })
        .collect())
}

/// Mean token count over a set of texts (e.g. concluding events).
pub fn mean_length<S: AsRef<str>>(texts: &[S]) -> Option<f64> {
    if texts.is_empty() {
        return None;
    }
    let total: usize = texts.iter().map(|t| tokenize(t.as_ref()).len()).sum();
    Some(total as f64 / texts.len() as f64)
}

/// Distinct token types over a corpus.
pub fn vocabulary<S: AsRef<str>>(texts: &[S]) -> BTreeSet<String> {
    texts
        .iter()
        .flat_map(|t| tokenize(t.as_ref()).into_inner())
        .collect()
}
