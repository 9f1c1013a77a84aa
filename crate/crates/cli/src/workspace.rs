//! Output directory handling: inputs are hashed as they are read, outputs
//! are staged in memory and written atomically together with the manifest
//! only once a command has fully succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use valuelens::io::{read_json, write_atomic};

use crate::error::{write_error, CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub settings: Value,
    pub seeds: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    /// Latest run of each subcommand.
    pub commands: BTreeMap<String, CommandRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            tool: "valuelens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: valuelens::VERSION.into(),
            commands: BTreeMap::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Workspace {
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    staged: BTreeMap<String, Vec<u8>>,
}

impl Workspace {
    pub fn new(out: &Path) -> Self {
        Workspace {
            out: out.to_path_buf(),
            inputs: BTreeMap::new(),
            staged: BTreeMap::new(),
        }
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// `explicit` if given, else `name` inside the output directory.
    pub fn path(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join(name))
    }

    fn label(&self, path: &Path) -> String {
        match path.strip_prefix(&self.out) {
            Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
            Err(_) => path.display().to_string(),
        }
    }

    /// Settings as recorded: paths inside the output directory become
    /// relative so identical runs in different places match byte for byte.
    fn relativize(&self, v: &Value) -> Value {
        match v {
            Value::String(s) => Value::String(self.label(Path::new(s))),
            Value::Array(a) => Value::Array(a.iter().map(|x| self.relativize(x)).collect()),
            Value::Object(o) => Value::Object(
                o.iter()
                    .map(|(k, x)| (k.clone(), self.relativize(x)))
                    .collect(),
            ),
            other => other.clone(),
        }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<String> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation("unreadable_input", format!("{}: {e}", path.display()))
        })?;
        self.inputs
            .insert(self.label(path), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn read_jsonl<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<Vec<T>> {
        let text = self.read(path)?;
        parse_jsonl(&text, path)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::validation("malformed_input", format!("{}: {e}", path.display()))
        })
    }

    pub fn stage(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.staged.insert(name.to_string(), bytes.into());
    }

    pub fn stage_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) {
        self.stage(name, valuelens::io::to_jsonl(items));
    }

    pub fn stage_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut s = serde_json::to_string_pretty(value).expect("serializable");
        s.push('\n');
        self.stage(name, s);
    }

    pub fn staged_names(&self) -> Vec<String> {
        self.staged.keys().cloned().collect()
    }

    /// Writes every staged file, then records the run in the manifest.
    pub fn commit(self, command: &str, settings: &Value) -> CliResult<Vec<String>> {
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &self.staged {
            write_atomic(&self.out.join(name), bytes).map_err(write_error)?;
            outputs.insert(name.clone(), sha256_hex(bytes));
        }
        let path = self.out.join(MANIFEST);
        let mut manifest: Manifest = if path.exists() {
            read_json(&path).unwrap_or_else(|e| {
                log::warn!("replacing unreadable manifest: {e}");
                Manifest::default()
            })
        } else {
            Manifest::default()
        };
        let settings = &self.relativize(settings);
        manifest.version = env!("CARGO_PKG_VERSION").into();
        manifest.core_version = valuelens::VERSION.into();
        let seeds = settings
            .as_object()
            .map(|o| {
                o.iter()
                    .filter(|(k, _)| k.ends_with("seed"))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect()
            })
            .unwrap_or_default();
        manifest.commands.insert(
            command.to_string(),
            CommandRecord {
                settings: settings.clone(),
                seeds,
                inputs: self.inputs,
                outputs,
            },
        );
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes()).map_err(write_error)?;
        Ok(self.staged.into_keys().collect())
    }
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> CliResult<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| {
            CliError::validation(
                "malformed_input",
                format!("{}:{}: {e}", path.display(), i + 1),
            )
        })?;
        out.push(item);
    }
    Ok(out)
}
