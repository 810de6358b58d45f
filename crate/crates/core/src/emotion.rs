//! Zero-shot emotion distributions from label likelihoods.
//!
//! For each of the 13 labels the classification prompt is rendered with the
//! label as the assistant turn, and the label's continuation log-likelihood is
//! scored. Probabilities are the max-subtracted softmax of these raw scores;
//! labels are not length-normalized.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::ChainFailure;
use crate::corpus::{EmotionCategory, EventChain, EventRecord, Method};
use crate::error::{Error, Result};
use crate::genpipe::prompt::render_id;
use crate::genpipe::{ChatMessage, Role, TemplateId};
use crate::likelihood::{canonical_sum, LikelihoodBackend};
use crate::scalar::{MeanStd, Real, Scalar};

/// Probabilities and raw log-likelihoods over all 13 categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionDistribution<T> {
    pub probabilities: BTreeMap<EmotionCategory, T>,
    pub raw_log_likelihoods: BTreeMap<EmotionCategory, f64>,
}

fn tolerance<T: Real>() -> f64 {
    (Scalar::to_f64(&T::epsilon()) * 64.0_f64).max(1e-9)
}

impl<T: Real> EmotionDistribution<T> {
    /// Normalizes raw log-likelihoods, indexed in [`EmotionCategory::ALL`] order.
    pub fn from_log_likelihoods(raw: [f64; EmotionCategory::COUNT]) -> Result<Self> {
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(
                "log_likelihood",
                format!("non-finite score for {}", EmotionCategory::ALL[i]),
            ));
        }
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = raw.iter().map(|v| (v - max).exp()).collect();
        let z = canonical_sum(exps.clone());
        let dist = Self {
            probabilities: EmotionCategory::ALL
                .iter()
                .zip(&exps)
                .map(|(&e, &x)| (e, T::from_f64(x / z)))
                .collect(),
            raw_log_likelihoods: EmotionCategory::ALL.iter().copied().zip(raw).collect(),
        };
        dist.validate()?;
        Ok(dist)
    }

    /// Builds a distribution from probabilities alone (raw scores set to `ln p`).
    pub fn from_probabilities(p: [T; EmotionCategory::COUNT]) -> Result<Self> {
        let dist = Self {
            probabilities: EmotionCategory::ALL.iter().copied().zip(p).collect(),
            raw_log_likelihoods: EmotionCategory::ALL
                .iter()
                .zip(p)
                .map(|(&e, v)| (e, Scalar::to_f64(&v).ln()))
                .collect(),
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.len() != EmotionCategory::COUNT {
            return Err(Error::validation("probabilities", "all 13 categories must be present"));
        }
        if self.probabilities.values().any(|p| !(*p >= T::zero())) {
            return Err(Error::validation("probabilities", "negative or NaN probability"));
        }
        let sum: f64 = self.probabilities.values().map(Scalar::to_f64).sum();
        if (sum - 1.0).abs() > tolerance::<T>() {
            return Err(Error::validation("probabilities", format!("sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn p(&self, emotion: EmotionCategory) -> T {
        self.probabilities[&emotion]
    }
}

/// Distributions over growing sentence prefixes, `m = 1..=5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionTrajectory<T> {
    pub chain_id: String,
    pub points: Vec<EmotionDistribution<T>>,
}

/// Classification context for `text`, without the assistant turn.
pub fn classification_context(text: &str) -> Result<Vec<ChatMessage>> {
    let mut messages = render_id(TemplateId::EmoCls, &[("text_instance", text), ("emotion", "")])?;
    if messages.last().map(|m| m.role) == Some(Role::Assistant) {
        messages.pop();
    }
    Ok(messages)
}

/// Emotion distribution of `text`.
pub fn classify<T: Real, B: LikelihoodBackend + ?Sized>(backend: &B, text: &str) -> Result<EmotionDistribution<T>> {
    if text.trim().is_empty() {
        return Err(Error::Empty("text to classify"));
    }
    let context = classification_context(text)?;
    let mut raw = [0.0; EmotionCategory::COUNT];
    for (slot, e) in raw.iter_mut().zip(EmotionCategory::ALL) {
        *slot = backend.score_continuation(&context, e.as_str())?;
    }
    EmotionDistribution::from_log_likelihoods(raw)
}

/// Classifies the first `m` sentences of `chain` for every `m`.
pub fn trajectory<T: Real, B: LikelihoodBackend + ?Sized>(backend: &B, chain: &EventChain) -> Result<EmotionTrajectory<T>> {
    let points = (1..=chain.sentences.len())
        .map(|m| {
            classify(backend, &chain.sentences[..m].join(" ")).map_err(|e| Error::Prefix {
                m,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmotionTrajectory {
        chain_id: chain.id.clone(),
        points,
    })
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy<T: Real>(dist: &EmotionDistribution<T>) -> T {
    dist.probabilities
        .values()
        .filter(|p| **p > T::zero())
        .fold(T::zero(), |acc, &p| acc - p * p.ln())
}

/// Most probable category; ties go to the earliest in [`EmotionCategory::ALL`].
pub fn top_label<T: Real>(dist: &EmotionDistribution<T>) -> EmotionCategory {
    let mut best = EmotionCategory::ALL[0];
    for e in EmotionCategory::ALL {
        if dist.p(e) > dist.p(best) {
            best = e;
        }
    }
    best
}

/// Export row for one classified text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub instance_id: String,
    pub m: usize,
    #[serde(flatten)]
    pub probabilities: BTreeMap<String, f64>,
    pub entropy: f64,
    pub top_label: EmotionCategory,
}

impl DistributionRecord {
    pub fn new(instance_id: &str, m: usize, dist: &EmotionDistribution<f64>) -> Self {
        Self {
            instance_id: instance_id.to_owned(),
            m,
            probabilities: dist
                .probabilities
                .iter()
                .map(|(e, p)| (e.as_str().to_owned(), *p))
                .collect(),
            entropy: entropy(dist),
            top_label: top_label(dist),
        }
    }
}

/// Mean probability of the prompted emotion for backstories (B) and chains (C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMeans {
    pub n: usize,
    pub backstory: f64,
    pub chain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionRow {
    pub emotion: EmotionCategory,
    /// Mean probability of `emotion` over the concluding events alone (E).
    pub events: f64,
    pub methods: BTreeMap<Method, MethodMeans>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOverall {
    pub backstory: MeanStd,
    pub chain: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionReport {
    pub rows: Vec<EmotionRow>,
    pub events_overall: MeanStd,
    pub methods_overall: BTreeMap<Method, MethodOverall>,
    /// Chain mean minus the Baseline chain mean, per method and emotion.
    pub chain_deltas: BTreeMap<Method, BTreeMap<EmotionCategory, f64>>,
    pub skipped: Vec<ChainFailure>,
}

/// Prompted-emotion probabilities of events, backstories and chains.
pub fn emotion_report<B: LikelihoodBackend + ?Sized>(
    backend: &B,
    events: &[EventRecord],
    chains: &[EventChain],
) -> Result<EmotionReport> {
    if events.is_empty() || chains.is_empty() {
        return Err(Error::Empty("events and chains for the emotion report"));
    }
    let mut skipped = Vec::new();
    let event_dists: HashMap<&str, EmotionDistribution<f64>> = events
        .par_iter()
        .map(|ev| (ev, classify::<f64, _>(backend, &ev.text)))
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|(ev, r)| match r {
            Ok(d) => Some((ev.id.as_str(), d)),
            Err(e) => {
                skipped.push(ChainFailure { chain_id: ev.id.clone(), error: e.to_string() });
                None
            }
        })
        .collect();
    let scored: Vec<(&EventChain, f64, f64)> = chains
        .par_iter()
        .map(|c| {
            let e = c.prompted_emotion;
            let b = classify::<f64, _>(backend, &c.backstory().join(" "))?.p(e);
            let full = classify::<f64, _>(backend, &c.text())?.p(e);
            Ok((c, b, full))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .zip(chains)
        .filter_map(|(r, c)| match r {
            Ok(v) => Some(v),
            Err(e) => {
                skipped.push(ChainFailure { chain_id: c.id.clone(), error: e.to_string() });
                None
            }
        })
        .collect();
    if event_dists.is_empty() || scored.is_empty() {
        return Err(Error::Empty("scorable instances"));
    }

    let mut cells: BTreeMap<(EmotionCategory, Method), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for &(c, b, full) in &scored {
        let cell = cells.entry((c.prompted_emotion, c.method)).or_default();
        cell.0.push(b);
        cell.1.push(full);
    }
    // Events are ordered as given so averages do not depend on hash order.
    let ordered_events: Vec<&EmotionDistribution<f64>> =
        events.iter().filter_map(|ev| event_dists.get(ev.id.as_str())).collect();
    let mut rows = Vec::new();
    let mut event_values = Vec::new();
    for emotion in EmotionCategory::ALL {
        let values: Vec<f64> = ordered_events.iter().map(|d| d.p(emotion)).collect();
        let events_mean = MeanStd::of(&values).expect("non-empty").mean;
        let methods: BTreeMap<Method, MethodMeans> = cells
            .range((emotion, Method::Baseline)..=(emotion, Method::Pcr))
            .map(|(&(_, m), (b, c))| {
                let bs = MeanStd::of(b).expect("non-empty");
                let cs = MeanStd::of(c).expect("non-empty");
                (m, MethodMeans { n: b.len(), backstory: bs.mean, chain: cs.mean })
            })
            .collect();
        if methods.is_empty() {
            continue;
        }
        event_values.push(events_mean);
        rows.push(EmotionRow { emotion, events: events_mean, methods });
    }
    let mut methods_overall = BTreeMap::new();
    for m in Method::ALL {
        let (b, c): (Vec<f64>, Vec<f64>) = scored
            .iter()
            .filter(|(ch, _, _)| ch.method == m)
            .map(|&(_, b, c)| (b, c))
            .unzip();
        if let (Some(backstory), Some(chain)) = (MeanStd::of(&b), MeanStd::of(&c)) {
            methods_overall.insert(m, MethodOverall { backstory, chain });
        }
    }
    let mut chain_deltas: BTreeMap<Method, BTreeMap<EmotionCategory, f64>> = BTreeMap::new();
    for row in &rows {
        if let Some(base) = row.methods.get(&Method::Baseline) {
            for (&m, means) in &row.methods {
                if m != Method::Baseline {
                    chain_deltas.entry(m).or_default().insert(row.emotion, means.chain - base.chain);
                }
            }
        }
    }
    Ok(EmotionReport {
        rows,
        events_overall: MeanStd::of(&event_values).expect("non-empty"),
        methods_overall,
        chain_deltas,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::assemble_chain;
    use crate::likelihood::{train_ngram, SequenceScore};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    struct Uniform;

    impl LikelihoodBackend for Uniform {
        fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
            Ok(SequenceScore { text: text.into(), token_count: 1, total_log_prob: -1.0 })
        }
        fn score_continuation(&self, _: &[ChatMessage], _: &str) -> Result<f64> {
            Ok(-3.0)
        }
    }

    /// Scores a label by how often it occurs in the text being classified.
    struct Counting;

    impl LikelihoodBackend for Counting {
        fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
            Uniform.sequence_log_prob(text)
        }
        fn score_continuation(&self, context: &[ChatMessage], label: &str) -> Result<f64> {
            let text = &context[1].content;
            let body = text.split('\n').nth(1).unwrap_or("");
            Ok(body.matches(label).count() as f64 - 5.0)
        }
    }

    fn one_hot(e: EmotionCategory) -> EmotionDistribution<f64> {
        let mut p = [0.0; 13];
        p[e.index()] = 1.0;
        EmotionDistribution::from_probabilities(p).unwrap()
    }

    #[test]
    fn uniform_backend() {
        let d: EmotionDistribution<f64> = classify(&Uniform, "Something happened.").unwrap();
        for e in EmotionCategory::ALL {
            assert_relative_eq!(d.p(e), 1.0 / 13.0, epsilon = 1e-15);
        }
        assert_relative_eq!(entropy(&d), 13f64.ln(), epsilon = 1e-12);
        assert_eq!(top_label(&d), EmotionCategory::ALL[0]);
        let f: EmotionDistribution<f32> = classify(&Uniform, "x").unwrap();
        assert!((f.p(EmotionCategory::Joy) - 1.0 / 13.0).abs() < 1e-6);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&one_hot(EmotionCategory::Fear)), 0.0);
        let mut p = [0.0; 13];
        p[0] = 0.5;
        p[1] = 0.5;
        let d = EmotionDistribution::from_probabilities(p).unwrap();
        assert_relative_eq!(entropy(&d), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn top_label_ties() {
        assert_eq!(top_label(&one_hot(EmotionCategory::Fear)), EmotionCategory::Fear);
        let mut p = [0.0; 13];
        p[EmotionCategory::Anger.index()] = 0.5;
        p[EmotionCategory::Boredom.index()] = 0.5;
        let d = EmotionDistribution::from_probabilities(p).unwrap();
        assert_eq!(top_label(&d), EmotionCategory::Anger);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(EmotionDistribution::<f64>::from_probabilities([0.1; 13]).is_err());
        let mut raw = [0.0; 13];
        raw[3] = f64::NAN;
        assert!(EmotionDistribution::<f64>::from_log_likelihoods(raw).is_err());
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(classify::<f64, _>(&Uniform, "  "), Err(Error::Empty(_))));
    }

    #[test]
    fn ngram_trained_on_label_prefers_it() {
        let m = train_ngram(&["joy joy joy joy"], 2, 1.0).unwrap();
        let d: EmotionDistribution<f64> = classify(&m, "We won the game.").unwrap();
        assert_eq!(top_label(&d), EmotionCategory::Joy);
    }

    #[test]
    fn label_order_does_not_change_probabilities() {
        let raw: [f64; 13] = std::array::from_fn(|i| -(i as f64) * 0.3);
        let d = EmotionDistribution::<f64>::from_log_likelihoods(raw).unwrap();
        let mut rev = raw;
        rev.reverse();
        let r = EmotionDistribution::<f64>::from_log_likelihoods(rev).unwrap();
        for (i, e) in EmotionCategory::ALL.iter().enumerate() {
            assert_eq!(d.p(*e), r.p(EmotionCategory::ALL[12 - i]));
        }
    }

    fn chain(emotion: EmotionCategory, method: Method, sentences: [&str; 4], ev: &EventRecord) -> EventChain {
        assemble_chain(ev, sentences.iter().map(|s| s.to_string()).collect(), method, emotion, None).unwrap()
    }

    #[test]
    fn trajectory_prefixes() {
        let ev = EventRecord::new("Holidays", "gifts", "I opened the box.");
        let c = chain(EmotionCategory::Joy, Method::Pc, ["joy came.", "fear came.", "joy again.", "sadness."], &ev);
        let t: EmotionTrajectory<f64> = trajectory(&Counting, &c).unwrap();
        assert_eq!(t.points.len(), 5);
        assert_eq!(t.points[0], classify(&Counting, "joy came.").unwrap());
        assert_eq!(t.points[3], classify(&Counting, &c.backstory().join(" ")).unwrap());
        assert_eq!(t.points[4], classify(&Counting, &c.text()).unwrap());
        assert_eq!(top_label(&t.points[0]), EmotionCategory::Joy);

        let same = chain(EmotionCategory::Joy, Method::Pc, ["x.", "x.", "x.", "x."], &EventRecord::new("Holidays", "gifts", "x."));
        let m = train_ngram(&["x joy"], 1, 1.0).unwrap();
        let t: EmotionTrajectory<f64> = trajectory(&m, &same).unwrap();
        assert!(t.points.windows(2).all(|w| w[0].probabilities == w[1].probabilities));
    }

    #[test]
    fn report_matches_hand_averages() {
        let e1 = EventRecord::new("Holidays", "gifts", "joy arrived.");
        let e2 = EventRecord::new("Sports", "ball", "fear arrived.");
        let chains = vec![
            chain(EmotionCategory::Joy, Method::Baseline, ["a.", "b.", "c.", "d."], &e1),
            chain(EmotionCategory::Joy, Method::Pcr, ["joy.", "joy.", "c.", "d."], &e1),
            chain(EmotionCategory::Fear, Method::Baseline, ["fear.", "b.", "c.", "d."], &e2),
        ];
        let r = emotion_report(&Counting, &[e1.clone(), e2.clone()], &chains).unwrap();
        let p = |text: &str, e| classify::<f64, _>(&Counting, text).unwrap().p(e);
        let joy = r.rows.iter().find(|row| row.emotion == EmotionCategory::Joy).unwrap();
        assert_relative_eq!(
            joy.events,
            (p(&e1.text, EmotionCategory::Joy) + p(&e2.text, EmotionCategory::Joy)) / 2.0,
            epsilon = 1e-15
        );
        let pcr = joy.methods[&Method::Pcr];
        assert_relative_eq!(pcr.backstory, p("joy. joy. c. d.", EmotionCategory::Joy), epsilon = 1e-15);
        assert_relative_eq!(pcr.chain, p(&chains[1].text(), EmotionCategory::Joy), epsilon = 1e-15);
        let delta = r.chain_deltas[&Method::Pcr][&EmotionCategory::Joy];
        assert_relative_eq!(delta, pcr.chain - joy.methods[&Method::Baseline].chain, epsilon = 1e-15);
        assert_eq!(r.methods_overall[&Method::Baseline].chain.n, 2);
        assert_eq!(r.rows.len(), 2);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn uniform_report() {
        let ev = EventRecord::new("Holidays", "gifts", "It rained.");
        let chains: Vec<_> = EmotionCategory::ALL
            .iter()
            .map(|&e| chain(e, Method::Pc, ["a.", "b.", "c.", "d."], &ev))
            .collect();
        let r = emotion_report(&Uniform, &[ev], &chains).unwrap();
        assert_eq!(r.rows.len(), 13);
        for row in &r.rows {
            assert_relative_eq!(row.events, 1.0 / 13.0, epsilon = 1e-15);
            assert_relative_eq!(row.methods[&Method::Pc].chain, 1.0 / 13.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn record_has_flat_probability_fields() {
        let rec = DistributionRecord::new("ch-1", 5, &one_hot(EmotionCategory::NoEmotion));
        let json = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["no-emotion"], 1.0);
        assert_eq!(json["top_label"], "no-emotion");
        assert_eq!(json["m"], 5);
    }

    proptest! {
        #[test]
        fn normalizes(raw in prop::array::uniform13(-500.0f64..0.0)) {
            let d = EmotionDistribution::<f64>::from_log_likelihoods(raw).unwrap();
            let sum: f64 = d.probabilities.values().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            let h = entropy(&d);
            prop_assert!(h >= 0.0 && h <= 13f64.ln() + 1e-12);
        }
    }
}
