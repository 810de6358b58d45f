//! Service configuration: a TOML file plus `ANNOSVC_*` environment overrides.
//!
//! | key                     | environment                  | default          |
//! |-------------------------|------------------------------|------------------|
//! | `bind`                  | `ANNOSVC_BIND`               | `127.0.0.1:8080` |
//! | `store_dir`             | `ANNOSVC_STORE_DIR`          | unset (memory)   |
//! | `static_dir`            | `ANNOSVC_STATIC_DIR`         | unset            |
//! | `events`                | `ANNOSVC_EVENTS`             | unset            |
//! | `chains`                | `ANNOSVC_CHAINS`             | unset            |
//! | `study.raters_per_instance` | `ANNOSVC_RATERS`         | 3                |
//! | `study.attention_interval`  | `ANNOSVC_ATTENTION_INTERVAL` | 10           |
//! | `study.flag_threshold`      | `ANNOSVC_FLAG_THRESHOLD` | 2                |
//! | `study.seed`                | `ANNOSVC_SEED`           | 0                |
//! | `study.reservation_ttl_secs`| `ANNOSVC_RESERVATION_TTL`| 1800             |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::study::{StudyConfig, StudyError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub store_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Line-delimited events to annotate.
    pub events: Option<PathBuf>,
    /// Line-delimited chains to annotate.
    pub chains: Option<PathBuf>,
    pub study: StudyConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            store_dir: None,
            static_dir: None,
            events: None,
            chains: None,
            study: StudyConfig::default(),
        }
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, StudyError> {
    raw.parse()
        .map_err(|_| StudyError::Config(format!("{key}={raw:?} is not a valid value")))
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, StudyError> {
        toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))
    }

    /// Reads `path` (if given), then applies overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, StudyError> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| StudyError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.with_overrides(env)
    }

    /// Applies `ANNOSVC_*` overrides; other keys are ignored.
    pub fn with_overrides(mut self, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, StudyError> {
        for (key, value) in env {
            match key.as_str() {
                "ANNOSVC_BIND" => self.bind = value,
                "ANNOSVC_STORE_DIR" => self.store_dir = Some(value.into()),
                "ANNOSVC_STATIC_DIR" => self.static_dir = Some(value.into()),
                "ANNOSVC_EVENTS" => self.events = Some(value.into()),
                "ANNOSVC_CHAINS" => self.chains = Some(value.into()),
                "ANNOSVC_RATERS" => self.study.raters_per_instance = parse_env(&key, &value)?,
                "ANNOSVC_ATTENTION_INTERVAL" => self.study.attention_interval = parse_env(&key, &value)?,
                "ANNOSVC_FLAG_THRESHOLD" => self.study.flag_threshold = parse_env(&key, &value)?,
                "ANNOSVC_SEED" => self.study.seed = parse_env(&key, &value)?,
                "ANNOSVC_RESERVATION_TTL" => self.study.reservation_ttl_secs = parse_env(&key, &value)?,
                _ => {}
            }
        }
        self.study.validate()?;
        Ok(self)
    }

    /// [`ServiceConfig::load`] with the process environment.
    pub fn from_env(path: Option<&Path>) -> Result<Self, StudyError> {
        Self::load(path, std::env::vars())
    }
}
