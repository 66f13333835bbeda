//! Optional TOML or JSON config file. Top-level keys hold global options;
//! one table per subcommand holds that command's options. Flags always win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

const GLOBAL_KEYS: [&str; 4] = ["seed", "cache_dir", "log_level", "jobs"];
const SECTIONS: [&str; 7] = ["datagen", "validate", "train", "eval", "render", "stats", "report"];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let bad = |e: String| CliError::Usage(format!("config {}: {e}", path.display()));
        let value: Value = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?,
            _ => {
                let t: toml::Value = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
                serde_json::to_value(t).map_err(|e| bad(e.to_string()))?
            }
        };
        let Value::Object(root) = value else {
            return Err(bad("expected a table at the top level".into()));
        };
        for (key, v) in &root {
            let known = GLOBAL_KEYS.contains(&key.as_str()) || (SECTIONS.contains(&key.as_str()) && v.is_object());
            if !known {
                return Err(bad(format!("unknown key {key:?}")));
            }
        }
        Ok(Self { root })
    }

    pub fn global<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.root
            .get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("config key {key:?}: {e}"))))
            .transpose()
    }

    /// The raw table for `command`, empty when absent.
    pub fn table(&self, command: &str) -> Map<String, Value> {
        self.root.get(command).and_then(Value::as_object).cloned().unwrap_or_default()
    }

    /// The table for `command` deserialized into its options type.
    pub fn section<T: DeserializeOwned + Default>(&self, command: &str) -> Result<T, CliError> {
        match self.root.get(command) {
            None => Ok(T::default()),
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("config table [{command}]: {e}")))
            }
        }
    }
}

/// Replaces `slot` with the flag value when the flag was given.
pub fn flag<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
