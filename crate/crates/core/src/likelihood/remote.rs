use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{flatten_messages, LikelihoodBackend, SequenceScore};
use crate::error::{Error, Result};
use crate::genpipe::{ChatMessage, Role};

/// How chat messages are rendered into a single prompt string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatFormat {
    /// Contents joined with single spaces, as the n-gram backend does.
    #[default]
    Flat,
    /// Llama 3 chat headers and end-of-turn markers.
    Llama3,
}

impl ChatFormat {
    /// Rendered context, followed by whatever must precede the continuation.
    pub fn render_context(self, messages: &[ChatMessage]) -> String {
        match self {
            ChatFormat::Flat => {
                let flat = flatten_messages(messages);
                if flat.is_empty() {
                    flat
                } else {
                    flat + " "
                }
            }
            ChatFormat::Llama3 => {
                let mut out = String::from("<|begin_of_text|>");
                for m in messages {
                    out.push_str(&format!(
                        "<|start_header_id|>{}<|end_header_id|>\n\n{}<|eot_id|>",
                        m.role.as_str(),
                        m.content
                    ));
                }
                out.push_str("<|start_header_id|>assistant<|end_header_id|>\n\n");
                out
            }
        }
    }

    /// Splits a trailing assistant message off `messages`, if present.
    fn split_assistant(messages: &[ChatMessage]) -> (&[ChatMessage], Option<&str>) {
        match messages.split_last() {
            Some((last, rest)) if last.role == Role::Assistant => (rest, Some(&last.content)),
            _ => (messages, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default)]
    pub format: ChatFormat,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout() -> u64 {
    120
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    echo: bool,
    max_new: u32,
    logprobs: bool,
}

/// Echoed prompt tokens. The first token usually has no log-probability.
#[derive(Debug, Clone, Deserialize)]
pub(crate) struct ScoreReply {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Option<Vec<Option<f64>>>,
    #[serde(default)]
    text_offset: Option<Vec<usize>>,
}

impl ScoreReply {
    /// Sum over tokens ending past byte offset `boundary`, and their count.
    pub(crate) fn sum_after(&self, boundary: usize) -> Result<(f64, usize)> {
        let logprobs = self
            .token_logprobs
            .as_ref()
            .ok_or(Error::Capability("endpoint did not return token log-probabilities; use the n-gram scorer"))?;
        let offsets = self
            .text_offset
            .as_ref()
            .ok_or(Error::Capability("endpoint did not return token offsets; use the n-gram scorer"))?;
        if logprobs.len() != self.tokens.len() || offsets.len() != self.tokens.len() {
            return Err(Error::Backend("mismatched token metadata lengths".into()));
        }
        let mut total = 0.0;
        let mut count = 0;
        for ((tok, lp), &off) in self.tokens.iter().zip(logprobs).zip(offsets) {
            if off + tok.len() <= boundary {
                continue;
            }
            match lp {
                Some(lp) => {
                    total += lp;
                    count += 1;
                }
                None if off == 0 => {}
                None => return Err(Error::Backend(format!("missing log-probability at offset {off}"))),
            }
        }
        Ok((total, count))
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Scores text against a completion endpoint that echoes prompt log-probabilities.
pub struct RemoteScorer {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
    gate: Semaphore,
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::validation("max_in_flight", "must be at least 1"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let gate = Semaphore {
            free: Mutex::new(config.max_in_flight),
            cv: Condvar::new(),
        };
        Ok(Self { client, config, gate })
    }

    fn echo(&self, prompt: &str) -> Result<ScoreReply> {
        let _permit = self.gate.acquire();
        let body = ScoreRequest {
            model: &self.config.model,
            prompt,
            echo: true,
            max_new: 0,
            logprobs: true,
        };
        let mut req = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Backend(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Error::Backend(format!("HTTP {status}: {text}")));
        }
        resp.json().map_err(|e| Error::Backend(e.to_string()))
    }
}

impl LikelihoodBackend for RemoteScorer {
    fn sequence_log_prob(&self, text: &str) -> Result<SequenceScore> {
        if text.trim().is_empty() {
            return Err(Error::Empty("text to score"));
        }
        let reply = self.echo(text)?;
        let (total, count) = reply.sum_after(0)?;
        if count == 0 {
            return Err(Error::Backend("no scored tokens returned".into()));
        }
        Ok(SequenceScore {
            text: text.to_owned(),
            token_count: count,
            total_log_prob: total,
        })
    }

    fn score_continuation(&self, context: &[ChatMessage], continuation: &str) -> Result<f64> {
        if continuation.trim().is_empty() {
            return Err(Error::Empty("continuation"));
        }
        let (context, _) = ChatFormat::split_assistant(context);
        let prefix = self.config.format.render_context(context);
        let prompt = format!("{prefix}{continuation}");
        let (total, count) = self.echo(&prompt)?.sum_after(prefix.len())?;
        if count == 0 {
            return Err(Error::Backend("no continuation tokens returned".into()));
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply(json: &str) -> ScoreReply {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn sums_tokens_past_boundary() {
        let r = reply(r#"{"tokens":["Hi"," there"," joy"],"token_logprobs":[null,-1.5,-0.25],"text_offset":[0,2,8]}"#);
        assert_eq!(r.sum_after(0).unwrap(), (-1.75, 2));
        assert_eq!(r.sum_after(8).unwrap(), (-0.25, 1));
    }

    #[test]
    fn token_straddling_boundary_counts_as_continuation() {
        let r = reply(r#"{"tokens":["ab","cd"],"token_logprobs":[null,-2.0],"text_offset":[0,2]}"#);
        assert_eq!(r.sum_after(3).unwrap(), (-2.0, 1));
    }

    #[test]
    fn missing_logprobs_is_capability_error() {
        let r = reply(r#"{"tokens":["a"]}"#);
        assert!(matches!(r.sum_after(0), Err(Error::Capability(_))));
    }

    #[test]
    fn flat_format_matches_ngram_flattening() {
        let msgs = [
            ChatMessage::new(Role::System, "sys"),
            ChatMessage::new(Role::User, "question"),
        ];
        assert_eq!(ChatFormat::Flat.render_context(&msgs), "sys question ");
        let l3 = ChatFormat::Llama3.render_context(&msgs);
        assert!(l3.starts_with("<|begin_of_text|><|start_header_id|>system"));
        assert!(l3.ends_with("assistant<|end_header_id|>\n\n"));
    }

    #[test]
    fn zero_in_flight_rejected() {
        let cfg = RemoteConfig {
            url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            key: None,
            format: ChatFormat::Flat,
            max_in_flight: 0,
            timeout_secs: 1,
        };
        assert!(RemoteScorer::new(cfg).is_err());
    }
}
