//! Experiment driver: configuration, presets, runs, result files and
//! plot-data tables.

pub mod config;
pub mod output;
pub mod plot;
pub mod presets;
pub mod run;

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

pub use config::RunConfig;
pub use run::{execute, prepare, run_experiment, Outcome, Problem, RunResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{0}")]
    Engine(#[from] permabc::Error),
    #[error("io error: {0}")]
    Io(String),
    #[error("incompatible runs:\n  {}", .0.join("\n  "))]
    Mismatch(Vec<String>),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Engine(permabc::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

/// Where a configuration comes from; later sources override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources<'a> {
    pub preset: Option<&'a str>,
    pub file: Option<&'a Path>,
    /// `key.path=value` assignments, applied in order.
    pub overrides: Vec<String>,
}

/// Merges preset, file and overrides into one tree and parses it.
pub fn load_config(sources: &ConfigSources<'_>) -> Result<RunConfig, CliError> {
    let mut tree = Value::Object(Default::default());
    if let Some(name) = sources.preset {
        let p = presets::find(name).ok_or_else(|| {
            let names: Vec<&str> = presets::PRESETS.iter().map(|p| p.name).collect();
            CliError::Config(vec![format!("unknown preset '{name}', expected one of {}", names.join(", "))])
        })?;
        config::merge(&mut tree, (p.config)());
    }
    if let Some(path) = sources.file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        config::merge(&mut tree, output::unwrap_config(value));
    }
    for o in &sources.overrides {
        config::set_path(&mut tree, o)?;
    }
    config::from_value(&tree)
}
