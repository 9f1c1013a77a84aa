//! One TOML config file shared by all subcommands. Each subcommand reads
//! the table named after it (dashes become underscores); keys are the
//! subcommand's long flag names with underscores. Precedence: defaults,
//! then the file, then flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const SECTIONS: [&str; 12] = [
    "ingest",
    "filter",
    "prescore",
    "sample",
    "serve",
    "consensus",
    "export_finetune",
    "build_vcq",
    "train_personal",
    "predict",
    "evaluate",
    "simulate",
];

/// Top-level keys allowed outside any section.
pub const GLOBAL_KEYS: [&str; 2] = ["out", "jobs"];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    sections: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation("unreadable_config", format!("{}: {e}", path.display()))
        })?;
        Self::parse(&text)
            .map_err(|e| CliError::validation(e.code, format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = toml::from_str(text)
            .map_err(|e| CliError::validation("invalid_config", e.to_string()))?;
        let value = serde_json::to_value(&table).expect("toml maps to json");
        let Value::Object(map) = value else {
            unreachable!("toml root is a table")
        };
        let mut cfg = ConfigFile::default();
        for (k, v) in map {
            match k.as_str() {
                "out" => {
                    cfg.out = Some(PathBuf::from(v.as_str().ok_or_else(|| {
                        CliError::validation("invalid_config", "`out` must be a string")
                    })?))
                }
                "jobs" => {
                    cfg.jobs = Some(v.as_u64().ok_or_else(|| {
                        CliError::validation("invalid_config", "`jobs` must be a positive integer")
                    })? as usize)
                }
                s if SECTIONS.contains(&s) => {
                    if !v.is_object() {
                        return Err(CliError::validation(
                            "invalid_config",
                            format!("[{s}] must be a table"),
                        ));
                    }
                    cfg.sections.insert(k, v);
                }
                other => {
                    return Err(CliError::validation(
                        "unknown_config_key",
                        format!("unknown top-level key `{other}`"),
                    ));
                }
            }
        }
        Ok(cfg)
    }

    pub fn section(&self, name: &str) -> Option<&Map<String, Value>> {
        self.sections.get(name).and_then(Value::as_object)
    }
}

/// Overlays the config section and then the non-null flags onto the
/// defaults of `S`. Returns the settings and their JSON form for the
/// manifest.
pub fn resolve<S, A>(section: &str, file: &ConfigFile, args: &A) -> CliResult<(S, Value)>
where
    S: Serialize + DeserializeOwned + Default,
    A: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(S::default()).expect("settings serialize")
    else {
        unreachable!("settings are structs")
    };
    let allowed: BTreeSet<String> = merged.keys().cloned().collect();
    if let Some(tbl) = file.section(section) {
        for (k, v) in tbl {
            if !allowed.contains(k) {
                return Err(CliError::validation(
                    "unknown_config_key",
                    format!("[{section}] has unknown key `{k}`"),
                ));
            }
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Value::Object(flags) = serde_json::to_value(args).expect("args serialize") {
        for (k, v) in flags {
            debug_assert!(
                allowed.contains(&k),
                "flag `{k}` has no config key in [{section}]"
            );
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    let value = Value::Object(merged);
    let settings = serde_json::from_value(value.clone())
        .map_err(|e| CliError::validation("invalid_config", format!("[{section}]: {e}")))?;
    Ok((settings, value))
}

/// Keys of a settings type, for help and consistency tests.
pub fn keys_of<S: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(S::default()).expect("settings serialize") {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}
