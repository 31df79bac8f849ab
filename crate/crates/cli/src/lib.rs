//! Batch front end: a JSON configuration names systems, one job and its
//! outputs; `run_file` executes it and maps the outcome to an exit code.

pub mod config;
pub mod jobs;
pub mod svg;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub use jobs::{Outcome, Status};

/// Exit code when the job's claim holds (certified, converged, consistent).
pub const EXIT_OK: i32 = 0;
/// Exit code for a refusal, divergence, or falsified declaration.
pub const EXIT_NEGATIVE: i32 = 1;
/// Exit code for configuration, input, or internal errors.
pub const EXIT_ERROR: i32 = 2;

fn load(path: &Path) -> Result<(config::Config, &Path)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = config::parse(&text).map_err(anyhow::Error::new)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok((cfg, base))
}

/// Parses, executes and (only on completion) writes the requested outputs.
pub fn run_file(path: &Path) -> Result<Outcome> {
    let (cfg, base) = load(path)?;
    let outputs = cfg.output_paths(base).map_err(anyhow::Error::new)?;
    let outcome = jobs::execute(&cfg, base, outputs.contains_key("svg"))?;
    let files: Vec<_> = outputs
        .iter()
        .filter_map(|(key, p)| outcome.artifacts.get(key).map(|bytes| (p.clone(), bytes.clone())))
        .collect();
    jobs::write_artifacts(&files)?;
    Ok(outcome)
}

/// Static validation of a configuration file without running the job.
pub fn validate_file(path: &Path) -> Result<String> {
    let (cfg, base) = load(path)?;
    jobs::validate(&cfg, base).map_err(anyhow::Error::new)?;
    Ok(format!("{}: valid {} job with {} system(s)", path.display(), cfg.job.name(), cfg.systems.len()))
}

/// Exit code for an outcome.
pub fn exit_code(outcome: &Outcome) -> i32 {
    match outcome.status {
        Status::Success => EXIT_OK,
        Status::Negative => EXIT_NEGATIVE,
    }
}
