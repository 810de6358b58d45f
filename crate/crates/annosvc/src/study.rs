//! Study state: instance assignment, attention checks, submissions, export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use emoctx_core::corpus::{append_records, read_records};
use emoctx_core::genpipe::derive_seed;
use emoctx_core::stats::AnnotationMatrix;
use emoctx_core::{AnnotationRecord, EmotionCategory, EventChain, EventRecord};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const SESSIONS_FILE: &str = "sessions.json";

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("no task is pending for this session")]
    NoPendingTask,
    #[error("task {0} is not the session's current task")]
    StaleTask(String),
    #[error("task {0} was already submitted")]
    Duplicate(String),
    #[error("invalid submission: {0}")]
    Invalid(String),
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] emoctx_core::Error),
}

pub type Result<T, E = StudyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Event,
    Chain,
    Attention,
}

/// Something annotators are shown: a single event or a five-sentence chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyInstance {
    pub id: String,
    pub kind: InstanceKind,
    pub sentences: Vec<String>,
}

impl StudyInstance {
    pub fn from_event(event: &EventRecord) -> Self {
        Self {
            id: event.id.clone(),
            kind: InstanceKind::Event,
            sentences: vec![event.text.clone()],
        }
    }

    pub fn from_chain(chain: &EventChain) -> Self {
        Self {
            id: chain.id.clone(),
            kind: InstanceKind::Chain,
            sentences: chain.sentences.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    Choice,
    Likert,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub key: String,
    pub kind: QuestionKind,
    pub prompt: String,
    pub required: bool,
}

fn question(key: &str, kind: QuestionKind, prompt: &str, required: bool) -> Question {
    Question {
        key: key.into(),
        kind,
        prompt: prompt.into(),
        required,
    }
}

/// Questions asked for an instance kind; the emotion choice always comes first.
pub fn questions(kind: InstanceKind) -> Vec<Question> {
    use QuestionKind::*;
    let emotion = question(
        "emotion",
        Choice,
        "Which emotion did the person most likely feel at the end?",
        true,
    );
    let human = question("written_by_human", Likert, "This text was written by a human.", false);
    let ai = question("written_by_ai", Likert, "This text was written by an AI.", false);
    match kind {
        InstanceKind::Event => vec![
            emotion,
            question("vagueness", Likert, "The event description is vague.", true),
            question("plausibility", Likert, "The event is plausible.", true),
            human,
            ai,
        ],
        InstanceKind::Chain => vec![
            emotion,
            question("influence", Boolean, "Did the earlier events influence your answer?", true),
            question("realism", Likert, "The sequence of events is realistic.", true),
            human,
            ai,
        ],
        InstanceKind::Attention => vec![emotion],
    }
}

/// One unit of work handed to an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub instance_id: String,
    pub kind: InstanceKind,
    pub sentences: Vec<String>,
    /// Whether the last sentence is the concluding event and should be emphasized.
    pub final_highlighted: bool,
    pub emotions: Vec<EmotionCategory>,
    pub questions: Vec<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextTask {
    Task { task: Task },
    Complete,
}

/// Answers posted for the session's current task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRequest {
    pub task_id: String,
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
}

impl SubmitRequest {
    /// Request with only the emotion answered.
    pub fn new(task_id: impl Into<String>, emotion: EmotionCategory) -> Self {
        Self {
            task_id: task_id.into(),
            emotion,
            vagueness: None,
            plausibility: None,
            written_by_human: None,
            written_by_ai: None,
            influence: None,
            realism: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionProgress {
    pub completed_by_you: usize,
    pub study_accepted: u64,
    pub study_needed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_pass: Option<bool>,
    pub flagged: bool,
    pub progress: SessionProgress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub instances: usize,
    pub raters_per_instance: u32,
    pub needed: u64,
    pub accepted: u64,
    pub reserved: u64,
    pub complete_instances: usize,
    pub sessions: usize,
    pub flagged_annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub instance_id: String,
    pub have: u32,
    pub need: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub raters_per_instance: u32,
    pub complete: Vec<String>,
    pub shortfalls: Vec<Shortfall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    /// Accepted records in submission order.
    pub records: Vec<AnnotationRecord>,
    pub report: CompletenessReport,
    /// Category counts over fully covered instances, if any.
    pub matrix: Option<AnnotationMatrix>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub raters_per_instance: u32,
    /// Every `attention_interval`-th issued task is an attention check.
    pub attention_interval: u32,
    /// Failed attention checks after which an annotator is flagged.
    pub flag_threshold: u32,
    pub seed: u64,
    /// Unsubmitted tasks are released after this many seconds.
    pub reservation_ttl_secs: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            raters_per_instance: 3,
            attention_interval: 10,
            flag_threshold: 2,
            seed: 0,
            reservation_ttl_secs: 1800,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.raters_per_instance < 1 {
            return Err(StudyError::Config("raters_per_instance must be >= 1".into()));
        }
        if self.attention_interval < 2 {
            return Err(StudyError::Config("attention_interval must be >= 2".into()));
        }
        if self.flag_threshold < 1 {
            return Err(StudyError::Config("flag_threshold must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Target {
    Instance(usize),
    Attention(EmotionCategory),
}

#[derive(Debug, Clone)]
struct Pending {
    task_id: String,
    target: Target,
    issued_at: Instant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Session {
    id: String,
    annotator_id: String,
    /// New tasks issued so far, attention checks included.
    issued: u32,
    attention: Vec<bool>,
    submitted: HashSet<String>,
    #[serde(skip)]
    pending: Option<Pending>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Slot {
    accepted: u32,
    reserved: u32,
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    sessions: Vec<Session>,
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Study {
    config: StudyConfig,
    instances: Vec<StudyInstance>,
    index: HashMap<String, usize>,
    slots: Vec<Slot>,
    sessions: BTreeMap<String, Session>,
    done: HashMap<String, HashSet<usize>>,
    records: Vec<AnnotationRecord>,
    rng: ChaCha8Rng,
    session_counter: u64,
    store: Option<PathBuf>,
    clock: Clock,
}

impl Study {
    /// In-memory study.
    pub fn new(config: StudyConfig, instances: Vec<StudyInstance>) -> Result<Self> {
        config.validate()?;
        if instances.is_empty() {
            return Err(StudyError::Config("study has no instances".into()));
        }
        let mut index = HashMap::new();
        for (i, inst) in instances.iter().enumerate() {
            if inst.kind == InstanceKind::Attention {
                return Err(StudyError::Config(format!("{} uses the reserved attention kind", inst.id)));
            }
            if index.insert(inst.id.clone(), i).is_some() {
                return Err(StudyError::Config(format!("duplicate instance id {}", inst.id)));
            }
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            slots: vec![Slot::default(); instances.len()],
            config,
            instances,
            index,
            sessions: BTreeMap::new(),
            done: HashMap::new(),
            records: Vec::new(),
            session_counter: 0,
            store: None,
            clock: Box::new(Utc::now),
        })
    }

    /// Study persisted under `dir`, resuming from whatever is already stored there.
    pub fn open(config: StudyConfig, instances: Vec<StudyInstance>, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut study = Self::new(config, instances)?;
        std::fs::create_dir_all(dir).map_err(|e| StudyError::Config(format!("{}: {e}", dir.display())))?;
        let ann_path = dir.join(ANNOTATIONS_FILE);
        if ann_path.exists() {
            for r in read_records::<AnnotationRecord>(&ann_path)? {
                let &i = study
                    .index
                    .get(&r.instance_id)
                    .ok_or_else(|| StudyError::Config(format!("stored annotation for unknown instance {}", r.instance_id)))?;
                if !study.done.entry(r.annotator_id.clone()).or_default().insert(i) {
                    return Err(StudyError::Config(format!(
                        "stored duplicate annotation of {} by {}",
                        r.instance_id, r.annotator_id
                    )));
                }
                study.slots[i].accepted += 1;
                study.records.push(r);
            }
        }
        let sess_path = dir.join(SESSIONS_FILE);
        if sess_path.exists() {
            let text = std::fs::read_to_string(&sess_path)
                .map_err(|e| StudyError::Config(format!("{}: {e}", sess_path.display())))?;
            let file: SessionFile = serde_json::from_str(&text)
                .map_err(|e| StudyError::Config(format!("{}: {e}", sess_path.display())))?;
            study.session_counter = file.sessions.len() as u64;
            study.sessions = file.sessions.into_iter().map(|s| (s.id.clone(), s)).collect();
        }
        study.rng = ChaCha8Rng::seed_from_u64(derive_seed(study.config.seed, &["resume", &study.records.len().to_string()]));
        study.store = Some(dir.to_path_buf());
        Ok(study)
    }

    /// Replaces the timestamp source (tests use a fixed clock).
    pub fn set_clock(&mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) {
        self.clock = Box::new(clock);
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn instances(&self) -> &[StudyInstance] {
        &self.instances
    }

    fn save_sessions(&self) -> Result<()> {
        let Some(dir) = &self.store else { return Ok(()) };
        let file = SessionFile {
            sessions: self.sessions.values().cloned().collect(),
        };
        let path = dir.join(SESSIONS_FILE);
        let tmp = dir.join(format!("{SESSIONS_FILE}.tmp"));
        let text = serde_json::to_string(&file).expect("serializable");
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| emoctx_core::Error::Io { path, source: e }.into())
    }

    pub fn create_session(&mut self, annotator_id: &str) -> Result<String> {
        let annotator_id = annotator_id.trim();
        if annotator_id.is_empty() {
            return Err(StudyError::Invalid("annotator_id is empty".into()));
        }
        let id = loop {
            let candidate = format!(
                "s{:016x}",
                derive_seed(self.config.seed, &["session", &self.session_counter.to_string()])
            );
            self.session_counter += 1;
            if !self.sessions.contains_key(&candidate) {
                break candidate;
            }
        };
        self.sessions.insert(
            id.clone(),
            Session {
                id: id.clone(),
                annotator_id: annotator_id.to_owned(),
                issued: 0,
                attention: Vec::new(),
                submitted: HashSet::new(),
                pending: None,
            },
        );
        self.save_sessions()?;
        Ok(id)
    }

    fn failures(&self, annotator: &str) -> u32 {
        self.sessions
            .values()
            .filter(|s| s.annotator_id == annotator)
            .map(|s| s.attention.iter().filter(|p| !**p).count() as u32)
            .sum()
    }

    pub fn is_flagged(&self, annotator: &str) -> bool {
        self.failures(annotator) >= self.config.flag_threshold
    }

    fn release_expired(&mut self) {
        let ttl = Duration::from_secs(self.config.reservation_ttl_secs);
        for s in self.sessions.values_mut() {
            let expired = s.pending.as_ref().is_some_and(|p| p.issued_at.elapsed() >= ttl);
            if expired {
                if let Some(Pending { target: Target::Instance(i), .. }) = s.pending.take() {
                    self.slots[i].reserved -= 1;
                }
            }
        }
    }

    fn task_for(&self, pending: &Pending) -> Task {
        match pending.target {
            Target::Instance(i) => {
                let inst = &self.instances[i];
                Task {
                    task_id: pending.task_id.clone(),
                    instance_id: inst.id.clone(),
                    kind: inst.kind,
                    sentences: inst.sentences.clone(),
                    final_highlighted: inst.kind == InstanceKind::Chain,
                    emotions: EmotionCategory::PROMPT_ORDER.to_vec(),
                    questions: questions(inst.kind),
                    instruction: None,
                }
            }
            Target::Attention(expected) => Task {
                task_id: pending.task_id.clone(),
                instance_id: format!("attention-{}", pending.task_id),
                kind: InstanceKind::Attention,
                sentences: vec![
                    "This item checks that you read each text carefully.".into(),
                    format!("Please ignore the question and select \"{expected}\" as the emotion."),
                ],
                final_highlighted: false,
                emotions: EmotionCategory::PROMPT_ORDER.to_vec(),
                questions: questions(InstanceKind::Attention),
                instruction: Some(format!("Select \"{expected}\".")),
            },
        }
    }

    /// The session's current task, or a new one.
    ///
    /// A pending task is returned again until it is submitted or expires. New
    /// tasks go to the instances with the fewest accepted plus reserved
    /// annotations that this annotator has not done; ties are broken by the
    /// study's seeded generator.
    pub fn next_task(&mut self, session_id: &str) -> Result<NextTask> {
        self.release_expired();
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_owned()))?;
        if let Some(p) = &session.pending {
            return Ok(NextTask::Task { task: self.task_for(p) });
        }
        let annotator = session.annotator_id.clone();
        let issued = session.issued + 1;
        let raters = self.config.raters_per_instance;
        let done = self.done.get(&annotator);
        let open: Vec<(usize, u32)> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, s)| s.accepted + s.reserved < raters && !done.is_some_and(|d| d.contains(i)))
            .map(|(i, s)| (i, s.accepted + s.reserved))
            .collect();
        let Some(min) = open.iter().map(|&(_, load)| load).min() else {
            return Ok(NextTask::Complete);
        };
        let target = if issued % self.config.attention_interval == 0 {
            Target::Attention(*EmotionCategory::ALL.choose(&mut self.rng).expect("non-empty"))
        } else {
            let ties: Vec<usize> = open.iter().filter(|&&(_, l)| l == min).map(|&(i, _)| i).collect();
            let i = *ties.choose(&mut self.rng).expect("non-empty");
            self.slots[i].reserved += 1;
            Target::Instance(i)
        };
        let pending = Pending {
            task_id: format!("{session_id}-t{issued}"),
            target,
            issued_at: Instant::now(),
        };
        let task = self.task_for(&pending);
        let session = self.sessions.get_mut(session_id).expect("checked above");
        session.issued = issued;
        session.pending = Some(pending);
        self.save_sessions()?;
        Ok(NextTask::Task { task })
    }

    fn validate_answers(kind: InstanceKind, req: &SubmitRequest) -> Result<()> {
        let likert = [
            ("vagueness", req.vagueness),
            ("plausibility", req.plausibility),
            ("written_by_human", req.written_by_human),
            ("written_by_ai", req.written_by_ai),
            ("realism", req.realism),
        ];
        for (name, v) in likert {
            if let Some(v) = v {
                if !(1..=5).contains(&v) {
                    return Err(StudyError::Invalid(format!("{name} = {v} is outside 1..=5")));
                }
            }
        }
        let asked: HashSet<String> = questions(kind).into_iter().map(|q| q.key).collect();
        let given = [
            ("vagueness", req.vagueness.is_some()),
            ("plausibility", req.plausibility.is_some()),
            ("written_by_human", req.written_by_human.is_some()),
            ("written_by_ai", req.written_by_ai.is_some()),
            ("realism", req.realism.is_some()),
            ("influence", req.influence.is_some()),
        ];
        for (name, present) in given {
            if present && !asked.contains(name) {
                return Err(StudyError::Invalid(format!("{name} is not asked for {kind:?} tasks")));
            }
        }
        for q in questions(kind).iter().filter(|q| q.required && q.key != "emotion") {
            if !given.iter().any(|(n, p)| *n == q.key && *p) {
                return Err(StudyError::Invalid(format!("{} is required", q.key)));
            }
        }
        Ok(())
    }

    fn session_progress(&self, annotator: &str) -> SessionProgress {
        SessionProgress {
            completed_by_you: self.done.get(annotator).map_or(0, HashSet::len),
            study_accepted: self.records.len() as u64,
            study_needed: self.instances.len() as u64 * u64::from(self.config.raters_per_instance),
        }
    }

    /// Accepts the answers for the session's current task.
    pub fn submit(&mut self, session_id: &str, req: SubmitRequest) -> Result<SubmitResponse> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_owned()))?;
        if session.submitted.contains(&req.task_id) {
            return Err(StudyError::Duplicate(req.task_id));
        }
        let pending = match &session.pending {
            Some(p) if p.task_id == req.task_id => p.clone(),
            Some(_) => return Err(StudyError::StaleTask(req.task_id)),
            None => return Err(StudyError::NoPendingTask),
        };
        let annotator = session.annotator_id.clone();
        match pending.target {
            Target::Attention(expected) => {
                Self::validate_answers(InstanceKind::Attention, &req)?;
                let pass = req.emotion == expected;
                let session = self.sessions.get_mut(session_id).expect("checked above");
                session.attention.push(pass);
                session.submitted.insert(req.task_id);
                session.pending = None;
                self.save_sessions()?;
                Ok(SubmitResponse {
                    accepted: true,
                    attention_pass: Some(pass),
                    flagged: self.is_flagged(&annotator),
                    progress: self.session_progress(&annotator),
                })
            }
            Target::Instance(i) => {
                let inst = &self.instances[i];
                Self::validate_answers(inst.kind, &req)?;
                if self.done.get(&annotator).is_some_and(|d| d.contains(&i)) {
                    return Err(StudyError::Duplicate(req.task_id));
                }
                let flagged = self.is_flagged(&annotator);
                let record = AnnotationRecord {
                    instance_id: inst.id.clone(),
                    annotator_id: annotator.clone(),
                    emotion: req.emotion,
                    vagueness: req.vagueness,
                    plausibility: req.plausibility,
                    written_by_human: req.written_by_human,
                    written_by_ai: req.written_by_ai,
                    influence: req.influence,
                    realism: req.realism,
                    attention_pass: !flagged,
                    timestamp: (self.clock)(),
                };
                if let Some(dir) = &self.store {
                    append_records(std::slice::from_ref(&record), dir.join(ANNOTATIONS_FILE))?;
                }
                let slot = &mut self.slots[i];
                slot.reserved -= 1;
                slot.accepted += 1;
                debug_assert!(slot.accepted <= self.config.raters_per_instance);
                self.done.entry(annotator.clone()).or_default().insert(i);
                self.records.push(record);
                let session = self.sessions.get_mut(session_id).expect("checked above");
                session.submitted.insert(req.task_id);
                session.pending = None;
                self.save_sessions()?;
                Ok(SubmitResponse {
                    accepted: true,
                    attention_pass: None,
                    flagged,
                    progress: self.session_progress(&annotator),
                })
            }
        }
    }

    /// Accepted annotation count per instance id.
    pub fn accepted_counts(&self) -> BTreeMap<String, u32> {
        self.instances
            .iter()
            .zip(&self.slots)
            .map(|(inst, s)| (inst.id.clone(), s.accepted))
            .collect()
    }

    pub fn progress(&self) -> Progress {
        let raters = self.config.raters_per_instance;
        let mut flagged: Vec<String> = self
            .sessions
            .values()
            .map(|s| s.annotator_id.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .filter(|a| self.is_flagged(a))
            .collect();
        flagged.sort();
        Progress {
            instances: self.instances.len(),
            raters_per_instance: raters,
            needed: self.instances.len() as u64 * u64::from(raters),
            accepted: self.slots.iter().map(|s| u64::from(s.accepted)).sum(),
            reserved: self.slots.iter().map(|s| u64::from(s.reserved)).sum(),
            complete_instances: self.slots.iter().filter(|s| s.accepted >= raters).count(),
            sessions: self.sessions.len(),
            flagged_annotators: flagged,
        }
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    /// Records, coverage report and the category-count matrix of complete instances.
    pub fn export(&self) -> ExportBundle {
        let need = self.config.raters_per_instance;
        let mut complete = Vec::new();
        let mut shortfalls = Vec::new();
        for (inst, slot) in self.instances.iter().zip(&self.slots) {
            if slot.accepted >= need {
                complete.push(inst.id.clone());
            } else {
                shortfalls.push(Shortfall {
                    instance_id: inst.id.clone(),
                    have: slot.accepted,
                    need,
                });
            }
        }
        let matrix = if complete.is_empty() {
            None
        } else {
            AnnotationMatrix::from_annotations(&self.records, &complete, need).ok()
        };
        ExportBundle {
            records: self.records.clone(),
            report: CompletenessReport {
                raters_per_instance: need,
                complete,
                shortfalls,
            },
            matrix,
        }
    }
}
