//! Staged pipeline over the core library: fetch, transform, train, predict,
//! calibrate, simulate and evaluate, driven by one JSON configuration.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;
pub mod synth;

use chrono::{SecondsFormat, Utc};
use serde_json::json;

use crate::artifacts::{write_text, Layout, Stage, METADATA_FILE};
use crate::config::{Resolved, FORMAT_VERSION};
use crate::error::{CliError, CliResult};

/// Runs `stages` in order on a pool of `jobs` threads (all cores when
/// `None`), then records the run in the metadata file.
pub fn run(command: &str, stages: &[Stage], r: &Resolved, jobs: Option<usize>) -> CliResult<()> {
    let started = Utc::now();
    let layout = Layout::new(r.output_dir());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::config_field("--jobs", "must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config_field("--jobs", format!("cannot start worker pool: {e}")))?;
    pool.install(|| stages.iter().try_for_each(|&s| stages::run_stage(s, r, &layout)))?;

    // the only artifact carrying wall-clock times
    let meta = json!({
        "format_version": FORMAT_VERSION,
        "command": command,
        "stages": stages.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "config_digest": r.digest(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "started_at": started.to_rfc3339_opts(SecondsFormat::Millis, true),
        "finished_at": Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    write_text(&layout.root.join(METADATA_FILE), &text)
}
