//! Option resolution: command-line flag, then config file, then default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub value: serde_json::Value,
    pub source: &'static str,
}

#[derive(Debug, Default)]
pub struct Settings {
    table: toml::Table,
    pub config_path: Option<PathBuf>,
    pub resolved: BTreeMap<String, Resolved>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        Ok(Settings {
            table,
            config_path: Some(path.to_path_buf()),
            resolved: BTreeMap::new(),
        })
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T, source: &'static str) {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.resolved
            .insert(key.to_string(), Resolved { value, source });
    }

    fn file_value<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| CliError::new("config", format!("key {key}: {e}"))),
        }
    }

    pub fn value<T: DeserializeOwned + Serialize>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T> {
        let (value, source) = match flag {
            Some(v) => (v, "flag"),
            None => match self.file_value(key)? {
                Some(v) => (v, "config"),
                None => (default, "default"),
            },
        };
        self.record(key, &value, source);
        Ok(value)
    }

    pub fn optional<T: DeserializeOwned + Serialize>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<Option<T>> {
        let found = match flag {
            Some(v) => Some((v, "flag")),
            None => self.file_value(key)?.map(|v| (v, "config")),
        };
        Ok(found.map(|(v, source)| {
            self.record(key, &v, source);
            v
        }))
    }

    pub fn required<T: DeserializeOwned + Serialize>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<T> {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::usage(format!("--{} is required", key.replace('_', "-"))))
    }

    /// Repeatable flags: a non-empty flag list wins over the file.
    pub fn list<T: DeserializeOwned + Serialize>(
        &mut self,
        key: &str,
        flag: Vec<T>,
        default: Vec<T>,
    ) -> CliResult<Vec<T>> {
        let flag = if flag.is_empty() { None } else { Some(flag) };
        self.value(key, flag, default)
    }
}
