use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::settings::{Resolved, Settings};

/// Record of one run, written as `<primary output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: &'static str,
    pub config_file: Option<PathBuf>,
    pub config: BTreeMap<String, Resolved>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub started_unix_secs: u64,
    pub duration_secs: f64,
    pub results: BTreeMap<String, serde_json::Value>,
}

pub struct RunRecorder {
    subcommand: &'static str,
    started: Instant,
    started_unix: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub results: BTreeMap<String, serde_json::Value>,
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunRecorder {
    pub fn start(subcommand: &'static str) -> Self {
        RunRecorder {
            subcommand,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            results: BTreeMap::new(),
        }
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.results.insert(key.to_string(), value);
    }

    /// Writes the manifest next to `primary`.
    pub fn finish(self, settings: Settings, primary: &Path) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config_file: settings.config_path,
            config: settings.resolved,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            started_unix_secs: self.started_unix,
            duration_secs: self.started.elapsed().as_secs_f64(),
            results: self.results,
        };
        let path = manifest_path(primary);
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::new("io", e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
