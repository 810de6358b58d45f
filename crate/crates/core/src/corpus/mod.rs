//! Domain types for events, chains and annotations, plus line-delimited persistence.

mod catalog;
mod emotion_category;
mod io;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use catalog::{EventType, EVENT_TYPES};
pub use emotion_category::EmotionCategory;
pub use io::{append_records, read_records, to_line, write_records, Record};

/// Number of sentences in an event chain.
pub const CHAIN_LEN: usize = 5;
/// Number of backstory sentences preceding the concluding event.
pub const BACKSTORY_LEN: usize = CHAIN_LEN - 1;

/// Backstory generation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Pc,
    Pcr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Pc, Method::Pcr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Pc => "pc",
            Method::Pcr => "pcr",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Pc => "PC",
            Method::Pcr => "PCR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "pc" => Ok(Method::Pc),
            "pcr" => Ok(Method::Pcr),
            other => Err(Error::validation("method", format!("unknown method {other:?}"))),
        }
    }
}

/// Hex digest of the given parts, separated unambiguously. Used for content-addressed ids.
pub fn content_id(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// A concluding event `s5`, generated from an event type and object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: String,
    pub event_type: String,
    pub event_object: String,
    pub text: String,
}

impl EventRecord {
    /// Builds a record whose id is derived from its content.
    pub fn new(
        event_type: impl Into<String>,
        event_object: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        let event_type = event_type.into();
        let event_object = event_object.into();
        let text = text.into();
        let id = format!("ev-{}", content_id(&[&event_type, &event_object, &text]));
        Self {
            id,
            event_type,
            event_object,
            text,
        }
    }
}

/// Intermediate artifacts kept for PC / PCR chains.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    /// Story plan returned by the planning prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    /// Backstory before revision (PCR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<Vec<String>>,
    /// Raw reply of the revision prompt (PCR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<String>,
}

/// A five-sentence narrative whose last sentence is the concluding event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventChain {
    pub id: String,
    pub event_id: String,
    pub method: Method,
    pub prompted_emotion: EmotionCategory,
    pub sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<Derivation>,
}

impl EventChain {
    pub fn backstory(&self) -> &[String] {
        &self.sentences[..BACKSTORY_LEN.min(self.sentences.len())]
    }

    pub fn final_event(&self) -> &str {
        self.sentences.last().map(String::as_str).unwrap_or("")
    }

    /// Sentences joined with single spaces.
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }

    /// Key of the generation cell this chain fills.
    pub fn cell(&self) -> (String, Method, EmotionCategory) {
        (self.event_id.clone(), self.method, self.prompted_emotion)
    }

    fn compute_id(method: Method, emotion: EmotionCategory, sentences: &[String]) -> String {
        let mut parts: Vec<&str> = vec![method.as_str(), emotion.as_str()];
        parts.extend(sentences.iter().map(String::as_str));
        format!("ch-{}", content_id(&parts))
    }

    /// Checks the chain against its concluding event.
    pub fn validate_against(&self, event: &EventRecord) -> Result<()> {
        self.validate()?;
        if self.event_id != event.id {
            return Err(Error::validation(
                "event_id",
                format!("chain references {} but event is {}", self.event_id, event.id),
            ));
        }
        if self.final_event() != event.text {
            return Err(Error::validation(
                "sentences",
                "final sentence differs from the event text",
            ));
        }
        Ok(())
    }
}

/// Builds a chain from a four-sentence backstory and the concluding event.
pub fn assemble_chain(
    event: &EventRecord,
    backstory: Vec<String>,
    method: Method,
    emotion: EmotionCategory,
    derivation: Option<Derivation>,
) -> Result<EventChain> {
    if backstory.len() != BACKSTORY_LEN {
        return Err(Error::validation(
            "backstory",
            format!("expected {BACKSTORY_LEN} sentences, got {}", backstory.len()),
        ));
    }
    if backstory.iter().any(|s| s.trim().is_empty()) {
        return Err(Error::validation("backstory", "empty sentence"));
    }
    let mut sentences = backstory;
    sentences.push(event.text.clone());
    let chain = EventChain {
        id: EventChain::compute_id(method, emotion, &sentences),
        event_id: event.id.clone(),
        method,
        prompted_emotion: emotion,
        sentences,
        derivation,
    };
    chain.validate_against(event)?;
    Ok(chain)
}

/// All chains generated for one concluding event with one method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackstorySet {
    pub event_id: String,
    pub method: Method,
    pub chains: BTreeMap<EmotionCategory, EventChain>,
}

impl BackstorySet {
    /// True when every emotion category has exactly one chain.
    pub fn is_complete(&self) -> bool {
        self.chains.len() == EmotionCategory::COUNT
    }

    pub fn missing(&self) -> Vec<EmotionCategory> {
        EmotionCategory::ALL
            .into_iter()
            .filter(|e| !self.chains.contains_key(e))
            .collect()
    }

    /// Groups chains by (event, method), preserving first-appearance order of the groups.
    ///
    /// A second chain for an already-filled (event, method, emotion) cell is rejected.
    pub fn partition(chains: &[EventChain]) -> Result<Vec<BackstorySet>> {
        let mut order: Vec<(String, Method)> = Vec::new();
        let mut groups: BTreeMap<(String, Method), BackstorySet> = BTreeMap::new();
        for chain in chains {
            let key = (chain.event_id.clone(), chain.method);
            let set = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key.clone());
                BackstorySet {
                    event_id: chain.event_id.clone(),
                    method: chain.method,
                    chains: BTreeMap::new(),
                }
            });
            if set
                .chains
                .insert(chain.prompted_emotion, chain.clone())
                .is_some()
            {
                return Err(Error::validation(
                    "prompted_emotion",
                    format!(
                        "duplicate {} chain for event {} ({})",
                        chain.prompted_emotion, chain.event_id, chain.method
                    ),
                ));
            }
        }
        Ok(order
            .into_iter()
            .map(|k| groups.remove(&k).expect("group exists"))
            .collect())
    }
}

/// One annotator's answer for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub annotator_id: String,
    pub emotion: EmotionCategory,
    #[serde(default)]
    pub vagueness: Option<u8>,
    #[serde(default)]
    pub plausibility: Option<u8>,
    #[serde(default)]
    pub written_by_human: Option<u8>,
    #[serde(default)]
    pub written_by_ai: Option<u8>,
    #[serde(default)]
    pub influence: Option<bool>,
    #[serde(default)]
    pub realism: Option<u8>,
    pub attention_pass: bool,
    pub timestamp: DateTime<Utc>,
}

impl AnnotationRecord {
    /// Minimal record with only the emotion answered.
    pub fn new(
        instance_id: impl Into<String>,
        annotator_id: impl Into<String>,
        emotion: EmotionCategory,
        timestamp: DateTime<Utc>,
    ) -> Self {
        Self {
            instance_id: instance_id.into(),
            annotator_id: annotator_id.into(),
            emotion,
            vagueness: None,
            plausibility: None,
            written_by_human: None,
            written_by_ai: None,
            influence: None,
            realism: None,
            attention_pass: true,
            timestamp,
        }
    }

    pub fn likert_fields(&self) -> [(&'static str, Option<u8>); 5] {
        [
            ("vagueness", self.vagueness),
            ("plausibility", self.plausibility),
            ("written_by_human", self.written_by_human),
            ("written_by_ai", self.written_by_ai),
            ("realism", self.realism),
        ]
    }
}

/// Rejects annotation sets with a repeated (instance, annotator) pair.
pub fn check_unique_annotations(records: &[AnnotationRecord]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert((r.instance_id.as_str(), r.annotator_id.as_str())) {
            return Err(Error::validation(
                "annotator_id",
                format!(
                    "duplicate annotation of {} by {}",
                    r.instance_id, r.annotator_id
                ),
            ));
        }
    }
    Ok(())
}

/// Cross-checks events and chains of a dataset.
///
/// Event ids must be unique, each chain must reference a known event and end
/// with its text verbatim, and no generation cell may be filled twice.
pub fn validate_dataset(events: &[EventRecord], chains: &[EventChain]) -> Result<()> {
    let mut by_id = BTreeMap::new();
    for e in events {
        if by_id.insert(e.id.as_str(), e).is_some() {
            return Err(Error::validation("id", format!("duplicate event id {}", e.id)));
        }
    }
    for c in chains {
        let event = by_id.get(c.event_id.as_str()).ok_or_else(|| {
            Error::validation("event_id", format!("unknown event {}", c.event_id))
        })?;
        c.validate_against(event)?;
    }
    BackstorySet::partition(chains)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn loudspeaker() -> EventRecord {
        EventRecord::new(
            "Competition",
            "communication tools",
            "The loudspeaker suddenly malfunctioned and went silent.",
        )
    }

    fn worked_guilt_backstory() -> Vec<String> {
        [
            "I had been tasked with testing the loudspeaker system before the big event.",
            "My supervisor warned me that a malfunction would be disastrous for the company's reputation.",
            "I skipped the recommended final check to grab a quick lunch before the event started.",
            "The event host began the ceremony, and the loudspeaker was working perfectly, filling me with temporary relief.",
        ]
        .map(String::from)
        .to_vec()
    }

    #[test]
    fn assembles_the_worked_guilt_example() {
        let ev = loudspeaker();
        let chain = assemble_chain(
            &ev,
            worked_guilt_backstory(),
            Method::Baseline,
            EmotionCategory::Guilt,
            None,
        )
        .unwrap();
        assert_eq!(chain.sentences.len(), 5);
        assert_eq!(chain.final_event(), ev.text);
        assert_eq!(chain.backstory(), worked_guilt_backstory().as_slice());
        assert!(chain.text().ends_with("temporary relief. The loudspeaker suddenly malfunctioned and went silent."));
    }

    #[test]
    fn rejects_short_backstory() {
        let err = assemble_chain(
            &loudspeaker(),
            vec!["a".into(), "b".into(), "c".into()],
            Method::Pc,
            EmotionCategory::Joy,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { field: "backstory", .. }));
    }

    #[test]
    fn rejects_blank_sentence() {
        let err = assemble_chain(
            &loudspeaker(),
            vec!["a".into(), " ".into(), "c".into(), "d".into()],
            Method::Pc,
            EmotionCategory::Joy,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { field: "backstory", .. }));
    }

    #[test]
    fn chain_ids_are_content_addressed() {
        let ev = loudspeaker();
        let a = assemble_chain(&ev, worked_guilt_backstory(), Method::Baseline, EmotionCategory::Guilt, None).unwrap();
        let b = assemble_chain(&ev, worked_guilt_backstory(), Method::Baseline, EmotionCategory::Guilt, None).unwrap();
        let c = assemble_chain(&ev, worked_guilt_backstory(), Method::Pc, EmotionCategory::Guilt, None).unwrap();
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
    }

    #[test]
    fn partition_detects_completeness_and_duplicates() {
        let ev = loudspeaker();
        let chains: Vec<_> = EmotionCategory::ALL
            .into_iter()
            .map(|e| assemble_chain(&ev, worked_guilt_backstory(), Method::Pcr, e, None).unwrap())
            .collect();
        let sets = BackstorySet::partition(&chains).unwrap();
        assert_eq!(sets.len(), 1);
        assert!(sets[0].is_complete());

        let sets = BackstorySet::partition(&chains[..12]).unwrap();
        assert_eq!(sets[0].missing(), vec![EmotionCategory::NoEmotion]);

        let mut dup = chains.clone();
        dup.push(chains[0].clone());
        assert!(BackstorySet::partition(&dup).is_err());
    }

    #[test]
    fn dataset_validation_checks_final_sentence() {
        let ev = loudspeaker();
        let mut chain = assemble_chain(&ev, worked_guilt_backstory(), Method::Baseline, EmotionCategory::Guilt, None).unwrap();
        validate_dataset(std::slice::from_ref(&ev), std::slice::from_ref(&chain)).unwrap();
        chain.sentences[4] = "The loudspeaker went silent.".into();
        assert!(validate_dataset(&[ev], &[chain]).is_err());
    }

    #[test]
    fn duplicate_annotation_pairs_rejected() {
        let ts = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        let a = AnnotationRecord::new("x", "ann1", EmotionCategory::Joy, ts);
        let b = AnnotationRecord::new("x", "ann2", EmotionCategory::Joy, ts);
        check_unique_annotations(&[a.clone(), b]).unwrap();
        assert!(check_unique_annotations(&[a.clone(), a]).is_err());
    }
}
