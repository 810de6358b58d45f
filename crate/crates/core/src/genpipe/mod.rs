//! Event and backstory generation through prompt chains.
//!
//! Step I renders the event prompt from a catalog type and object. Step II
//! produces a four-sentence backstory for a concluding event and a target
//! emotion with one of three strategies:
//!
//! - **Baseline**: one prompt, parsed into four sentences.
//! - **PC**: a planning prompt, then an extraction prompt over the plan.
//! - **PCR**: PC followed by a revision prompt over the plan and the PC chain.
//!
//! Every prompt step is retried up to `max_attempts` times on backend or parse
//! failure, with the step seed incremented per attempt. The base seed of a cell
//! depends on the global seed, the event id and the emotion (not the method),
//! so PC and PCR share their plan and draft.

pub mod backend;
pub mod parse;
pub mod prompt;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    ChatBackend, ChatRequest, EndpointConfig, FixtureBackend, FnBackend, HttpChatBackend,
    RecordingBackend, TranscriptEntry,
};
pub use parse::{parse_numbered_list, parse_revised_sequence};
pub use prompt::{render, ChatMessage, PromptTemplate, Role, TemplateId};
pub use synthetic::SyntheticWriter;

use crate::corpus::{
    assemble_chain, Derivation, EmotionCategory, EventChain, EventRecord, EventType, Method,
    BACKSTORY_LEN,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub max_attempts: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "Llama-3.1-70B-Instruct".into(),
            temperature: 0.7,
            seed: 0,
            max_attempts: 3,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::validation("temperature", "must be >= 0"));
        }
        if self.max_attempts == 0 {
            return Err(Error::validation("max_attempts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Derives a 64-bit seed from a base seed and labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Step<'a, B: ?Sized> {
    backend: &'a B,
    config: &'a GenerationConfig,
    base_seed: u64,
}

impl<B: ChatBackend + ?Sized> Step<'_, B> {
    /// Runs `attempt` with seeds `base, base+1, …` until it succeeds or attempts run out.
    fn retry<T>(&self, mut attempt: impl FnMut(u64) -> Result<T>) -> Result<T> {
        let mut last = None;
        for k in 0..self.config.max_attempts {
            match attempt(self.base_seed.wrapping_add(u64::from(k))) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Exhausted {
            attempts: self.config.max_attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }

    fn chat(&self, messages: Vec<ChatMessage>, seed: u64) -> Result<String> {
        self.backend.complete(&ChatRequest {
            model: self.config.model.clone(),
            messages,
            temperature: self.config.temperature,
            seed,
        })
    }
}

/// Generates one concluding event for a catalog type and an object.
pub fn generate_event<B: ChatBackend + ?Sized>(
    event_type: &str,
    event_object: &str,
    config: &GenerationConfig,
    backend: &B,
) -> Result<EventRecord> {
    config.validate()?;
    let ty = EventType::find(event_type).ok_or_else(|| {
        Error::validation("event_type", format!("{event_type:?} is not a catalog event type"))
    })?;
    if event_object.trim().is_empty() {
        return Err(Error::validation("event_object", "empty"));
    }
    let messages = prompt::render_id(
        TemplateId::P1,
        &[("ds_event_type", ty.name), ("ds_event_object", event_object)],
    )?;
    let step = Step {
        backend,
        config,
        base_seed: derive_seed(config.seed, &["event", ty.name, event_object]),
    };
    let text = step.retry(|seed| {
        let reply = step.chat(messages.clone(), seed)?;
        parse::single_sentence(&reply).ok_or(Error::ListParse {
            expected: 1,
            raw: reply,
        })
    })?;
    Ok(EventRecord::new(ty.name, event_object, text))
}

/// Draws `n` distinct (type, object) pairs from the catalog, cycling over types.
pub fn draw_catalog(n: usize, seed: u64) -> Vec<(&'static str, &'static str)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_type: Vec<Vec<&'static str>> = crate::corpus::EVENT_TYPES
        .iter()
        .map(|t| {
            let mut objs = t.objects.to_vec();
            objs.shuffle(&mut rng);
            objs
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut t = 0;
    while out.len() < n && per_type.iter().any(|v| !v.is_empty()) {
        if let Some(obj) = per_type[t].pop() {
            out.push((crate::corpus::EVENT_TYPES[t].name, obj));
        }
        t = (t + 1) % per_type.len();
    }
    out
}

fn cell_seed(config: &GenerationConfig, event: &EventRecord, emotion: EmotionCategory) -> u64 {
    derive_seed(config.seed, &["backstory", &event.id, emotion.as_str()])
}

fn baseline<B: ChatBackend + ?Sized>(
    step: &Step<'_, B>,
    event: &EventRecord,
    emotion: EmotionCategory,
) -> Result<Vec<String>> {
    step.retry(|seed| {
        let distractors = prompt::distractor_list(emotion, seed);
        let messages = prompt::render_id(
            TemplateId::P2,
            &[
                ("event", &event.text),
                ("emotion", emotion.as_str()),
                ("distractors", &distractors),
            ],
        )?;
        let reply = step.chat(messages, seed)?;
        parse_numbered_list(&reply, BACKSTORY_LEN)
    })
}

/// Plan, then extract the four backstory sentences from it.
fn plan_construct<B: ChatBackend + ?Sized>(
    step: &Step<'_, B>,
    event: &EventRecord,
    emotion: EmotionCategory,
) -> Result<(String, Vec<String>)> {
    let plan = step.retry(|seed| {
        let distractors = prompt::distractor_list(emotion, seed);
        let messages = prompt::render_id(
            TemplateId::P2_1,
            &[
                ("event", &event.text),
                ("emotion", emotion.as_str()),
                ("distractors", &distractors),
            ],
        )?;
        let reply = step.chat(messages, seed)?;
        if reply.trim().is_empty() {
            return Err(Error::Backend("empty story plan".into()));
        }
        Ok(reply)
    })?;
    let draft = step.retry(|seed| {
        let messages = prompt::render_id(
            TemplateId::P2_2,
            &[("explanation", &plan), ("event", &event.text)],
        )?;
        let reply = step.chat(messages, seed)?;
        parse_numbered_list(&reply, BACKSTORY_LEN)
    })?;
    Ok((plan, draft))
}

/// Revises a PC draft given its plan. Returns the raw reply and the new backstory.
fn revise<B: ChatBackend + ?Sized>(
    step: &Step<'_, B>,
    event: &EventRecord,
    plan: &str,
    draft: &[String],
) -> Result<(String, Vec<String>)> {
    let mut chain = draft.to_vec();
    chain.push(event.text.clone());
    let chain_text = prompt::numbered(&chain);
    step.retry(|seed| {
        let messages = prompt::render_id(
            TemplateId::P2_3,
            &[("story_plan", plan), ("chain", &chain_text)],
        )?;
        let reply = step.chat(messages, seed)?;
        let revised = parse_revised_sequence(&reply, BACKSTORY_LEN)?;
        Ok((reply, revised))
    })
}

/// Generates the backstory for one (event, emotion) cell with `method`.
pub fn generate_backstory<B: ChatBackend + ?Sized>(
    event: &EventRecord,
    emotion: EmotionCategory,
    method: Method,
    config: &GenerationConfig,
    backend: &B,
) -> Result<EventChain> {
    let chains = generate_cell(event, emotion, &[method], config, backend)?;
    Ok(chains.into_iter().next().expect("one chain per requested method"))
}

/// Generates all requested methods for one (event, emotion) cell.
///
/// PC and PCR share plan and draft; the result follows the order of `methods`.
pub fn generate_cell<B: ChatBackend + ?Sized>(
    event: &EventRecord,
    emotion: EmotionCategory,
    methods: &[Method],
    config: &GenerationConfig,
    backend: &B,
) -> Result<Vec<EventChain>> {
    config.validate()?;
    if event.text.trim().is_empty() {
        return Err(Error::validation("text", "empty event text"));
    }
    let step = Step {
        backend,
        config,
        base_seed: cell_seed(config, event, emotion),
    };
    let mut pc: Option<(String, Vec<String>)> = None;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let chain = match method {
            Method::Baseline => {
                let b = baseline(&step, event, emotion)?;
                assemble_chain(event, b, method, emotion, None)?
            }
            Method::Pc | Method::Pcr => {
                if pc.is_none() {
                    pc = Some(plan_construct(&step, event, emotion)?);
                }
                let (plan, draft) = pc.as_ref().expect("plan computed");
                if method == Method::Pc {
                    let derivation = Derivation {
                        plan: Some(plan.clone()),
                        ..Default::default()
                    };
                    assemble_chain(event, draft.clone(), method, emotion, Some(derivation))?
                } else {
                    let (reply, revised) = revise(&step, event, plan, draft)?;
                    let derivation = Derivation {
                        plan: Some(plan.clone()),
                        draft: Some(draft.clone()),
                        revision: Some(reply),
                    };
                    assemble_chain(event, revised, method, emotion, Some(derivation))?
                }
            }
        };
        out.push(chain);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub event_id: String,
    pub method: Method,
    pub emotion: EmotionCategory,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCount {
    pub method: Method,
    pub emotion: EmotionCategory,
    pub chains: usize,
}

/// Outcome of a dataset run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub events: usize,
    pub requested_cells: usize,
    pub skipped_existing: usize,
    pub generated: usize,
    /// New chains per (method, emotion), in fixed order.
    pub counts: Vec<CellCount>,
    pub failures: Vec<CellFailure>,
}

/// Result of [`run_dataset`]: new chains in cell order plus the summary.
#[derive(Debug, Clone)]
pub struct DatasetRun {
    pub chains: Vec<EventChain>,
    pub summary: DatasetSummary,
}

/// Attempts every (event, emotion, method) cell not already present in `existing`.
///
/// Cells run in parallel; the output order is events × emotions × methods
/// (methods in their fixed order) regardless of scheduling. A failing cell is
/// reported in the summary and never aborts the batch.
pub fn run_dataset<B: ChatBackend + ?Sized>(
    events: &[EventRecord],
    methods: &BTreeSet<Method>,
    config: &GenerationConfig,
    backend: &B,
    existing: &[EventChain],
) -> Result<DatasetRun> {
    if events.is_empty() {
        return Err(Error::Empty("events"));
    }
    if methods.is_empty() {
        return Err(Error::Empty("methods"));
    }
    config.validate()?;
    let done: HashSet<(String, Method, EmotionCategory)> =
        existing.iter().map(EventChain::cell).collect();

    let mut jobs: Vec<(&EventRecord, EmotionCategory, Vec<Method>)> = Vec::new();
    let mut skipped = 0;
    for event in events {
        for emotion in EmotionCategory::ALL {
            let todo: Vec<Method> = methods
                .iter()
                .copied()
                .filter(|m| !done.contains(&(event.id.clone(), *m, emotion)))
                .collect();
            skipped += methods.len() - todo.len();
            if !todo.is_empty() {
                jobs.push((event, emotion, todo));
            }
        }
    }

    let results: Vec<(Vec<EventChain>, Vec<CellFailure>)> = jobs
        .par_iter()
        .map(|(event, emotion, todo)| run_job(event, *emotion, todo, config, backend))
        .collect();

    let mut chains = Vec::new();
    let mut failures = Vec::new();
    for (c, f) in results {
        chains.extend(c);
        failures.extend(f);
    }
    let mut counts: BTreeMap<(Method, EmotionCategory), usize> = BTreeMap::new();
    for c in &chains {
        *counts.entry((c.method, c.prompted_emotion)).or_default() += 1;
    }
    let summary = DatasetSummary {
        events: events.len(),
        requested_cells: events.len() * EmotionCategory::COUNT * methods.len(),
        skipped_existing: skipped,
        generated: chains.len(),
        counts: counts
            .into_iter()
            .map(|((method, emotion), chains)| CellCount {
                method,
                emotion,
                chains,
            })
            .collect(),
        failures,
    };
    Ok(DatasetRun { chains, summary })
}

/// Runs one (event, emotion) job; a PC failure also fails a dependent PCR cell.
fn run_job<B: ChatBackend + ?Sized>(
    event: &EventRecord,
    emotion: EmotionCategory,
    todo: &[Method],
    config: &GenerationConfig,
    backend: &B,
) -> (Vec<EventChain>, Vec<CellFailure>) {
    let fail = |method: Method, e: &Error| CellFailure {
        event_id: event.id.clone(),
        method,
        emotion,
        error: e.to_string(),
    };
    let mut chains = Vec::new();
    let mut failures = Vec::new();
    if todo.contains(&Method::Baseline) {
        match generate_cell(event, emotion, &[Method::Baseline], config, backend) {
            Ok(c) => chains.extend(c),
            Err(e) => failures.push(fail(Method::Baseline, &e)),
        }
    }
    let planned: Vec<Method> = todo
        .iter()
        .copied()
        .filter(|m| *m != Method::Baseline)
        .collect();
    if !planned.is_empty() {
        match generate_cell(event, emotion, &planned, config, backend) {
            Ok(c) => chains.extend(c),
            Err(e) if planned.len() == 2 => {
                // PC may have succeeded on its own; retry it alone so a revision
                // failure does not discard it.
                match generate_cell(event, emotion, &[Method::Pc], config, backend) {
                    Ok(c) => {
                        chains.extend(c);
                        failures.push(fail(Method::Pcr, &e));
                    }
                    Err(e) => {
                        failures.push(fail(Method::Pc, &e));
                        failures.push(fail(Method::Pcr, &e));
                    }
                }
            }
            Err(e) => failures.push(fail(planned[0], &e)),
        }
    }
    (chains, failures)
}
