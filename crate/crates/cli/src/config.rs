//! Layered configuration: built-in defaults, then a TOML file, then the
//! `TDA_SEED` environment variable, then command-line flags. Every value
//! that does not come from the defaults is recorded with its source.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use tda_core::harness::{Override, Provenance};

use crate::CliError;

pub const SEED_ENV: &str = "TDA_SEED";

/// A configuration being assembled together with its provenance trail.
pub struct Layered {
    value: Value,
    pub overrides: Vec<Override>,
}

impl Layered {
    pub fn new<C: Serialize>(defaults: &C) -> Result<Self, CliError> {
        let value = serde_json::to_value(defaults).map_err(|e| CliError::Runtime(e.into()))?;
        Ok(Layered {
            value,
            overrides: Vec::new(),
        })
    }

    /// Merges a TOML file. Unknown keys and type mismatches are usage errors.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("cannot parse config {}: {e}", path.display())))?;
        let file = serde_json::to_value(table).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut leaves = Vec::new();
        merge(&mut self.value, file, "", &mut leaves)?;
        self.overrides.extend(leaves.into_iter().map(|(key, value)| Override {
            key,
            value,
            source: Provenance::File,
        }));
        Ok(())
    }

    /// Sets one dotted key, e.g. `targeting.lambda`.
    pub fn set<V: Serialize>(&mut self, key: &str, value: V, source: Provenance) -> Result<(), CliError> {
        let value = serde_json::to_value(value).map_err(|e| CliError::Runtime(e.into()))?;
        let mut node = &mut self.value;
        for part in key.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| CliError::Usage(format!("unknown configuration key `{key}`")))?;
        }
        self.overrides.push(Override {
            key: key.to_string(),
            value: display(&value),
            source,
        });
        *node = value;
        Ok(())
    }

    /// Applies `TDA_SEED` when set and no flag overrides it.
    pub fn seed_from_env(&mut self, key: &str, flag: Option<u64>) -> Result<(), CliError> {
        if flag.is_some() {
            return Ok(());
        }
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={raw} is not an unsigned integer")))?;
            self.set(key, seed, Provenance::Env)?;
        }
        Ok(())
    }

    pub fn build<C: DeserializeOwned>(self) -> Result<(C, Vec<Override>), CliError> {
        let config = serde_json::from_value(self.value)
            .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        Ok((config, self.overrides))
    }
}

fn display(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Deep-merges `file` into `base`. A table whose keys are unknown to a
/// single-key default (an enum variant such as `step_rule`) replaces it.
fn merge(base: &mut Value, file: Value, prefix: &str, leaves: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let Value::Object(file) = file else {
        leaves.push((prefix.to_string(), display(&file)));
        *base = file;
        return Ok(());
    };
    let replace = match base {
        Value::Object(b) => b.len() == 1 && file.keys().any(|k| !b.contains_key(k)),
        _ => true,
    };
    if replace {
        if !base.is_object() && !base.is_null() {
            return Err(CliError::Usage(format!("configuration key `{prefix}` does not take a table")));
        }
        let value = Value::Object(file);
        leaves.push((prefix.to_string(), display(&value)));
        *base = value;
        return Ok(());
    }
    let b: &mut Map<String, Value> = base.as_object_mut().expect("checked above");
    for (k, v) in file {
        let key = join(prefix, &k);
        let slot = b
            .get_mut(&k)
            .ok_or_else(|| CliError::Usage(format!("unknown configuration key `{key}`")))?;
        merge(slot, v, &key, leaves)?;
    }
    Ok(())
}
