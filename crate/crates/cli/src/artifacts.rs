//! On-disk layout of stage outputs and the helpers that read them back.
//!
//! Every stage owns one directory under the output root and rewrites it
//! from scratch. JSON artifacts wrap their payload as
//! `{"format_version": N, "<key>": ...}`.

use std::fs;
use std::path::{Path, PathBuf};

use episim_core::series::{parse_daily_csv, DailySeries, MultiSeries};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::FORMAT_VERSION;
use crate::error::{CliError, CliResult};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fetch,
    Transform,
    Train,
    Predict,
    Calibrate,
    Simulate,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Fetch,
        Stage::Transform,
        Stage::Train,
        Stage::Predict,
        Stage::Calibrate,
        Stage::Simulate,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Transform => "transform",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Calibrate => "calibrate",
            Stage::Simulate => "simulate",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Output root plus path conventions.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn file(&self, stage: Stage, name: &str) -> PathBuf {
        self.dir(stage).join(name)
    }

    /// Empties (or creates) a stage directory before it is rewritten.
    pub fn reset(&self, stage: Stage) -> CliResult<PathBuf> {
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(dir)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("i/o error: {e}")).with_path(path)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Reads an upstream artifact; absence means the producing stage has not
/// run.
pub fn read_text(path: &Path, producer: Stage) -> CliResult<String> {
    if !path.exists() {
        return Err(CliError::data(format!(
            "missing artifact; run `{}` first",
            producer.name()
        ))
        .with_path(path));
    }
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Reads a user-supplied input file.
pub fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read input: {e}")).with_path(path))
}

pub fn write_json<T: Serialize>(path: &Path, key: &str, payload: &T) -> CliResult<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("format_version".into(), Value::from(FORMAT_VERSION));
    let v = serde_json::to_value(payload).map_err(|e| CliError::data(format!("serialize: {e}")))?;
    doc.insert(key.into(), v);
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| CliError::data(format!("serialize: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, key: &str, producer: Stage) -> CliResult<T> {
    let text = read_text(path, producer)?;
    let bad = |m: String| CliError::data(m).with_path(path);
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| bad(format!("malformed JSON: {e}")))?;
    let version = doc.get("format_version").and_then(Value::as_u64);
    if version != Some(u64::from(FORMAT_VERSION)) {
        return Err(bad(format!("unsupported format_version {version:?}")));
    }
    let payload = doc.get_mut(key).map(Value::take).ok_or_else(|| bad(format!("missing `{key}`")))?;
    serde_json::from_value(payload).map_err(|e| bad(format!("malformed `{key}`: {e}")))
}

pub fn read_daily(path: &Path, producer: Stage, label: &str) -> CliResult<DailySeries> {
    let text = read_text(path, producer)?;
    parse_daily_csv(text.as_bytes(), label).map_err(|e| CliError::from(e).with_path(path))
}

pub fn read_multi(path: &Path, producer: Stage) -> CliResult<MultiSeries> {
    let text = read_text(path, producer)?;
    MultiSeries::from_csv(text.as_bytes()).map_err(|e| CliError::from(e).with_path(path))
}
