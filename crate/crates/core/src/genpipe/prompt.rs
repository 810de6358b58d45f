//! Prompt templates for event generation, backstory generation and zero-shot classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EmotionCategory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    /// Event description from type and object.
    P1,
    /// Single-prompt backstory (Baseline).
    P2,
    /// Story plan.
    P2_1,
    /// Backstory extraction from the plan.
    P2_2,
    /// Revision of a constructed chain.
    P2_3,
    /// Zero-shot emotion classification.
    EmoCls,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::P1,
        TemplateId::P2,
        TemplateId::P2_1,
        TemplateId::P2_2,
        TemplateId::P2_3,
        TemplateId::EmoCls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::P1 => "P1",
            TemplateId::P2 => "P2",
            TemplateId::P2_1 => "P2_1",
            TemplateId::P2_2 => "P2_2",
            TemplateId::P2_3 => "P2_3",
            TemplateId::EmoCls => "EMO_CLS",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('.', "_");
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| Error::UnknownTemplate(s.to_owned()))
    }
}

const BACKSTORY_SYSTEM: &str = "It is often clear from the text that describes an event which specific emotion it evokes in a person that experienced it. However, additional information about the situation can change our understanding of how a person might interpret the event. You are an expert at creating a scenario that explains why a specific event may cause a possibly unusual emotion in you. In addition, you can concisely make this scenario apparent for the reader by formulating a description of 4 events that took place immediately before the event.";

const P1_SYSTEM: &str = "You are a person describing an event which you have experienced.\n\n10 examples of such event descriptions are as follows:\n0: The phone rang.\n1: A cat meowed.\n2: The car engine sputtered to a stop.\n3: A child laughed in the park.\n4: A bird fluttered past the window.\n5: The waves crashed against the shore.\n6: A train whistled as it approached.\n7: The fireworks lit up the sky.\n8: A bicycle rode by.\n9: A crowd cheered at the concert.";

const P1_USER: &str = "The event you experienced is of type: {ds_event_type}. In a longer text you are describing several things that happened at that event. Something happened at that event with the following object(s): {ds_event_object}. In your response, only provide a very short sentence describing what happened to/with the object(s).";

const P2_USER: &str = "You experienced something happening which is described by the following event description: 5. \"{event}\".\nThis event somehow made you clearly feel the emotion: \"{emotion}\".\nProvide a text describing four events that took place immediately before event 5 by giving a list of descriptions of these events (1.-4.). The events 1.-4. clearly influence your personal emotional interpretation of the event that happened after (5.). The emotion \"{emotion}\" is only triggered by what specifically happened in event 5. The events 1.-4. evoked other emotions, such as: {distractors}. In your response, for each of the 4 event descriptions: Only give a summary text consisting of the main clause in a very short sentence. Each description should only describe a singular event. Indicate each event description in a separate line.";

const P2_1_USER: &str = "You experienced something happening which is described by the following event description: 5. \"{event}\". This event somehow made you clearly feel the emotion: \"{emotion}\". First, give a brief explanation of a scenario in which it can be deduced from the description of event 5. that you felt {emotion}. Second, phrase this explanation as events that took place immediately before event 5 by giving a list of descriptions of these events (1.-4.). The events 1.-4. clearly influence your personal emotional interpretation of the event that happened after (5.). The emotion \"{emotion}\" is only triggered by what specifically happened in event 5. The events 1.-4. evoked other emotions, such as: {distractors}.";

const P2_2_USER: &str = "Extract the sequence of 4 descriptions of events that happened from the following text: ### {explanation} ### The event 5: \"{event}\" happened after the 4 events. In your response, for each of the 4 event descriptions: Only give a summary text consisting of the main clause in a very short sentence. Each description should only describe a singular event. Indicate each event description in a separate line.";

const P2_3_SYSTEM: &str = "You are an expert at adapting a narrative to convey specific emotional interpretations. You will receive a text that outlines a sequence of events as experienced by an individual. Additionally, there will be an explanation of how a particular emotion is triggered in this individual based on the final event.";

const P2_3_USER: &str = "Explanation: {story_plan}\nEvent sequence: {chain}\nFirst, provide a brief evaluation on how the first four events (1.-4.) of the sequence could be adjusted to form a coherent narrative which better aligns with the conclusion given in the explanation. The text of the last event (5.) should remain as is.\nSecond, provide a revised event sequence that incorporates these adjustments while keeping the sentence length for each event description similar. Each event description should consist only of a main clause in a very short sentence. Do not explicitly mention the emotions felt.";

const EMO_CLS_SYSTEM: &str = "You are an expert in emotion analysis on event descriptions.";

const EMO_CLS_USER: &str = "A person describes their experience as follows:\n{text_instance}\nWhat emotion was evoked in the person at the end? As your response, provide only one label from the emotion set: anger, disgust, fear, guilt, joy, sadness, shame, pride, boredom, surprise, trust, relief, no-emotion.";

/// A sequence of role-tagged message texts with `{name}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub messages: Vec<(Role, &'static str)>,
    pub placeholders: BTreeSet<&'static str>,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> Self {
        let (messages, placeholders): (Vec<(Role, &'static str)>, &[&'static str]) = match id {
            TemplateId::P1 => (
                vec![(Role::System, P1_SYSTEM), (Role::User, P1_USER)],
                &["ds_event_type", "ds_event_object"],
            ),
            TemplateId::P2 => (
                vec![(Role::System, BACKSTORY_SYSTEM), (Role::User, P2_USER)],
                &["event", "emotion", "distractors"],
            ),
            TemplateId::P2_1 => (
                vec![(Role::System, BACKSTORY_SYSTEM), (Role::User, P2_1_USER)],
                &["event", "emotion", "distractors"],
            ),
            TemplateId::P2_2 => (vec![(Role::User, P2_2_USER)], &["explanation", "event"]),
            TemplateId::P2_3 => (
                vec![(Role::System, P2_3_SYSTEM), (Role::User, P2_3_USER)],
                &["story_plan", "chain"],
            ),
            TemplateId::EmoCls => (
                vec![
                    (Role::System, EMO_CLS_SYSTEM),
                    (Role::User, EMO_CLS_USER),
                    (Role::Assistant, "{emotion}"),
                ],
                &["text_instance", "emotion"],
            ),
        };
        Self {
            id,
            messages,
            placeholders: placeholders.iter().copied().collect(),
        }
    }

    /// Placeholder names that occur in the message texts.
    pub fn used_placeholders(&self) -> BTreeSet<&'static str> {
        self.messages
            .iter()
            .flat_map(|(_, text)| scan(text).filter_map(|seg| match seg {
                Segment::Slot(name) => Some(name),
                Segment::Text(_) => None,
            }))
            .collect()
    }
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

/// Splits a template text into literal runs and `{identifier}` slots.
fn scan(text: &str) -> impl Iterator<Item = Segment<'_>> {
    let mut rest = text;
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        let mut search_from = 0;
        while let Some(open) = rest[search_from..].find('{').map(|i| i + search_from) {
            if let Some(close) = rest[open..].find('}').map(|i| i + open) {
                let name = &rest[open + 1..close];
                if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
                    if open > 0 {
                        let lit = &rest[..open];
                        rest = &rest[open..];
                        return Some(Segment::Text(lit));
                    }
                    rest = &rest[close + 1..];
                    return Some(Segment::Slot(name));
                }
            }
            search_from = open + 1;
        }
        let lit = rest;
        rest = "";
        Some(Segment::Text(lit))
    })
}

/// Substitutes every placeholder of `template` in a single pass.
///
/// Bound values are inserted verbatim and never rescanned. Extra bindings are ignored.
pub fn render(template: &PromptTemplate, bindings: &BTreeMap<&str, String>) -> Result<Vec<ChatMessage>> {
    if let Some(missing) = template
        .placeholders
        .iter()
        .find(|p| !bindings.contains_key(**p))
    {
        return Err(Error::MissingBinding((*missing).to_owned()));
    }
    template
        .messages
        .iter()
        .map(|(role, text)| {
            let mut out = String::with_capacity(text.len() + 64);
            for seg in scan(text) {
                match seg {
                    Segment::Text(t) => out.push_str(t),
                    Segment::Slot(name) => match bindings.get(name) {
                        Some(v) if template.placeholders.contains(name) => out.push_str(v),
                        _ => return Err(Error::MissingBinding(name.to_owned())),
                    },
                }
            }
            Ok(ChatMessage::new(*role, out))
        })
        .collect()
}

/// Convenience wrapper over [`render`] taking a template id and borrowed bindings.
pub fn render_id(id: TemplateId, bindings: &[(&str, &str)]) -> Result<Vec<ChatMessage>> {
    let map = bindings.iter().map(|(k, v)| (*k, (*v).to_owned())).collect();
    render(&PromptTemplate::get(id), &map)
}

/// The twelve non-target emotions in a seeded random order, comma-joined.
pub fn distractor_list(target: EmotionCategory, seed: u64) -> String {
    distractors(target, seed)
        .iter()
        .map(|e| e.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn distractors(target: EmotionCategory, seed: u64) -> Vec<EmotionCategory> {
    let mut others: Vec<_> = EmotionCategory::ALL
        .into_iter()
        .filter(|e| *e != target)
        .collect();
    others.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    others
}

/// Renders sentences as `1. …` lines.
pub fn numbered(sentences: &[String]) -> String {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n")
}
