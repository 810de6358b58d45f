//! Run settings: built-in defaults, then the `--config` TOML file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use emoctx_annosvc::ServiceConfig;
use emoctx_core::coherence::DEFAULT_SAMPLE;
use emoctx_core::genpipe::{
    ChatBackend, EndpointConfig, FixtureBackend, GenerationConfig, HttpChatBackend, SyntheticWriter,
};
use emoctx_core::likelihood::{default_scorer, LikelihoodBackend, NGramModel, RemoteConfig, RemoteScorer};
use serde::{Deserialize, Serialize};

/// Where chat completions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Synthetic,
    /// Replays a recorded transcript; misses are errors.
    Fixture(PathBuf),
    /// `[endpoint]` from the config file, or `BACKEND_URL` / `BACKEND_KEY`.
    Http,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "http" => Ok(Self::Http),
            _ => match s.strip_prefix("fixture:") {
                Some(p) if !p.is_empty() => Ok(Self::Fixture(p.into())),
                _ => Err(format!(
                    "unknown backend {s:?}; expected synthetic, fixture:<path> or http"
                )),
            },
        }
    }
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Synthetic => f.write_str("synthetic"),
            Self::Fixture(p) => write!(f, "fixture:{}", p.display()),
            Self::Http => f.write_str("http"),
        }
    }
}

/// Where log-likelihoods come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerChoice {
    /// Trigram model over the bundled corpus.
    Ngram,
    /// A model saved in the n-gram text format.
    NgramFile(PathBuf),
    /// `[remote_scorer]` from the config file.
    Remote,
}

impl FromStr for ScorerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ngram" => Ok(Self::Ngram),
            "remote" => Ok(Self::Remote),
            _ => match s.strip_prefix("ngram:") {
                Some(p) if !p.is_empty() => Ok(Self::NgramFile(p.into())),
                _ => Err(format!("unknown scorer {s:?}; expected ngram, ngram:<path> or remote")),
            },
        }
    }
}

impl fmt::Display for ScorerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ngram => f.write_str("ngram"),
            Self::NgramFile(p) => write!(f, "ngram:{}", p.display()),
            Self::Remote => f.write_str("remote"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_attempts: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceSection {
    pub sample_target: Option<usize>,
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<String>,
    pub scorer: Option<String>,
    pub generation: GenerationSection,
    pub endpoint: Option<EndpointConfig>,
    pub remote_scorer: Option<RemoteConfig>,
    pub coherence: CoherenceSection,
    pub service: Option<ServiceConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings. This is what the run manifest records.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub out: PathBuf,
    pub backend: String,
    pub scorer: String,
    pub generation: GenerationConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote_scorer: Option<RemoteConfig>,
    pub sample_target: usize,
    pub service: ServiceConfig,
    #[serde(skip)]
    backend_choice: Option<BackendChoice>,
    #[serde(skip)]
    scorer_choice: Option<ScorerChoice>,
}

/// Global flags that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<BackendChoice>,
    pub scorer: Option<ScorerChoice>,
}

impl Settings {
    pub fn resolve(file: ConfigFile, flags: Overrides) -> anyhow::Result<Self> {
        let seed = flags.seed.or(file.seed).unwrap_or(0);
        let backend = match (flags.backend, &file.backend) {
            (Some(b), _) => b,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => BackendChoice::Synthetic,
        };
        let scorer = match (flags.scorer, &file.scorer) {
            (Some(s), _) => s,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => ScorerChoice::Ngram,
        };
        let defaults = GenerationConfig::default();
        let endpoint = match backend {
            BackendChoice::Http => Some(
                file.endpoint
                    .or_else(EndpointConfig::from_env)
                    .context("backend http needs an [endpoint] table or BACKEND_URL")?,
            ),
            _ => None,
        };
        let generation = GenerationConfig {
            endpoint,
            model: file.generation.model.unwrap_or(defaults.model),
            temperature: file.generation.temperature.unwrap_or(defaults.temperature),
            seed,
            max_attempts: file.generation.max_attempts.unwrap_or(defaults.max_attempts),
        };
        generation.validate()?;
        if scorer == ScorerChoice::Remote && file.remote_scorer.is_none() {
            bail!("scorer remote needs a [remote_scorer] table in the config file");
        }
        let sample_target = file.coherence.sample_target.unwrap_or(DEFAULT_SAMPLE);
        if sample_target == 0 {
            bail!("coherence.sample_target must be at least 1");
        }
        Ok(Self {
            seed,
            out: flags.out.or(file.out).unwrap_or_else(|| "out".into()),
            backend: backend.to_string(),
            scorer: scorer.to_string(),
            generation,
            remote_scorer: file.remote_scorer,
            sample_target,
            service: file.service.unwrap_or_default(),
            backend_choice: Some(backend),
            scorer_choice: Some(scorer),
        })
    }

    /// Copy with credentials removed, for the manifest.
    pub fn redacted(&self) -> Self {
        let mut s = self.clone();
        if let Some(ep) = s.generation.endpoint.as_mut() {
            ep.key = ep.key.as_ref().map(|_| "<redacted>".into());
        }
        if let Some(rs) = s.remote_scorer.as_mut() {
            rs.key = rs.key.as_ref().map(|_| "<redacted>".into());
        }
        s
    }

    pub fn chat_backend(&self) -> anyhow::Result<Box<dyn ChatBackend>> {
        Ok(match self.backend_choice.as_ref().expect("resolved") {
            BackendChoice::Synthetic => Box::new(SyntheticWriter),
            BackendChoice::Fixture(p) => Box::new(FixtureBackend::load(p)?),
            BackendChoice::Http => Box::new(HttpChatBackend::new(
                self.generation.endpoint.clone().expect("http backend has an endpoint"),
            )?),
        })
    }

    pub fn scorer(&self) -> anyhow::Result<Box<dyn LikelihoodBackend>> {
        Ok(match self.scorer_choice.as_ref().expect("resolved") {
            ScorerChoice::Ngram => Box::new(default_scorer()),
            ScorerChoice::NgramFile(p) => Box::new(NGramModel::load(p)?),
            ScorerChoice::Remote => Box::new(RemoteScorer::new(
                self.remote_scorer.clone().expect("checked in resolve"),
            )?),
        })
    }
}
