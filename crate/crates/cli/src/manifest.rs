//! Per-run manifest and output bookkeeping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use chrono::{DateTime, Utc};
use emoctx_core::corpus::{write_records, Record};
use serde::Serialize;

use crate::settings::Settings;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub millis: u128,
    /// Items produced or processed, where that is meaningful.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

/// Written to `<out>/manifest.json` at the end of every run, successful or not.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub settings: Settings,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    /// Files written by this run. Each exists when the manifest is written.
    pub outputs: Vec<PathBuf>,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Output directory plus the manifest being filled in.
pub struct Run {
    pub settings: Settings,
    pub manifest: RunManifest,
}

impl Run {
    pub fn new(settings: Settings, command: Vec<String>) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("global".to_owned(), settings.seed);
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            command,
            started_at: Utc::now(),
            settings: settings.redacted(),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
            error: None,
        };
        Self { settings, manifest }
    }

    pub fn out_dir(&self) -> &Path {
        &self.settings.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.settings.out.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_owned());
    }

    pub fn seed(&mut self, label: &str, seed: u64) {
        self.manifest.seeds.insert(label.to_owned(), seed);
    }

    /// Times `f` as a named stage; `count` extracts an item count from its result.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> anyhow::Result<T>,
        count: impl FnOnce(&T) -> Option<usize>,
    ) -> anyhow::Result<T> {
        let start = Instant::now();
        let result = f();
        let millis = start.elapsed().as_millis();
        self.manifest.stages.push(StageRecord {
            name: name.to_owned(),
            millis,
            count: result.as_ref().ok().and_then(count),
        });
        result
    }

    fn ensure_dir(&self) -> anyhow::Result<()> {
        std::fs::create_dir_all(self.out_dir())
            .with_context(|| format!("creating {}", self.out_dir().display()))
    }

    fn record_output(&mut self, path: PathBuf) {
        if !self.manifest.outputs.contains(&path) {
            self.manifest.outputs.push(path);
        }
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        self.ensure_dir()?;
        let path = self.path(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.record_output(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_jsonl<R: Record>(&mut self, name: &str, records: &[R]) -> anyhow::Result<PathBuf> {
        self.ensure_dir()?;
        let path = self.path(name);
        write_records(records, &path)?;
        self.record_output(path.clone());
        Ok(path)
    }

    /// Serializes arbitrary rows one JSON object per line.
    pub fn write_lines<T: Serialize>(&mut self, name: &str, rows: &[T]) -> anyhow::Result<PathBuf> {
        let mut text = String::new();
        for row in rows {
            text.push_str(&serde_json::to_string(row)?);
            text.push('\n');
        }
        self.write_text(name, &text)
    }

    /// Records an output written by someone else, e.g. a transcript.
    pub fn add_output(&mut self, path: PathBuf) {
        self.record_output(path);
    }

    /// Writes the manifest, dropping any listed output that does not exist.
    pub fn finish(mut self, error: Option<String>) -> anyhow::Result<PathBuf> {
        self.manifest.error = error;
        self.manifest.outputs.retain(|p| p.exists());
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        self.ensure_dir()?;
        let path = self.path(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
