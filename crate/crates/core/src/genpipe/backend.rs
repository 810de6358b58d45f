//! Chat-completion backends: HTTP, recorded fixtures, and in-process closures.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::ChatMessage;
use crate::error::{Error, Result};

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub seed: u64,
}

impl ChatRequest {
    /// Fixture key: hex SHA-256 over the rendered messages and the seed.
    pub fn hash(&self) -> String {
        request_hash(&self.messages, self.seed)
    }
}

pub fn request_hash(messages: &[ChatMessage], seed: u64) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        messages: &'a [ChatMessage],
        seed: u64,
    }
    let canonical = serde_json::to_vec(&Key { messages, seed }).expect("serializable");
    hex::encode(Sha256::digest(&canonical))
}

/// Anything that turns a chat request into assistant text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        (**self).complete(request)
    }
}

/// Backend over a closure, mainly for tests.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        (self.0)(request)
    }
}

/// Endpoint settings for [`HttpChatBackend`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

impl EndpointConfig {
    /// Reads `BACKEND_URL` and optional `BACKEND_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("BACKEND_URL").ok()?;
        Some(Self {
            url,
            key: std::env::var("BACKEND_KEY").ok(),
            timeout_secs: default_timeout_secs(),
        })
    }
}

/// Chat backend speaking `POST {model, messages, temperature, seed} -> {content}`.
///
/// OpenAI-style `{choices: [{message: {content}}]}` replies are accepted as well.
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    endpoint: EndpointConfig,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl HttpChatBackend {
    pub fn new(endpoint: EndpointConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(Self { client, endpoint })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let mut req = self.client.post(&self.endpoint.url).json(request);
        if let Some(key) = &self.endpoint.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Backend(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Error::Backend(format!("HTTP {status}: {body}")));
        }
        let reply: ChatReply = resp.json().map_err(|e| Error::Backend(e.to_string()))?;
        reply
            .content
            .or_else(|| reply.choices.into_iter().next().map(|c| c.message.content))
            .ok_or_else(|| Error::Backend("reply has no content".into()))
    }
}

/// One line of a fixture transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub response: String,
}

/// Replays recorded responses keyed by request hash.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    responses: BTreeMap<String, String>,
}

impl FixtureBackend {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        Self {
            responses: entries
                .into_iter()
                .map(|e| (e.request_hash, e.response))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for FixtureBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let hash = request.hash();
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(Error::FixtureMiss(hash))
    }
}

/// Wraps a backend and records every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<BTreeMap<String, String>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded entries, sorted by request hash.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.log
            .lock()
            .expect("recording lock")
            .iter()
            .map(|(h, r)| TranscriptEntry {
                request_hash: h.clone(),
                response: r.clone(),
            })
            .collect()
    }

    /// Writes the transcript, one entry per line, sorted by request hash.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let entries = self.entries();
        let mut out = String::new();
        for e in &entries {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        Ok(entries.len())
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let reply = self.inner.complete(request)?;
        self.log
            .lock()
            .expect("recording lock")
            .insert(request.hash(), reply.clone());
        Ok(reply)
    }
}
