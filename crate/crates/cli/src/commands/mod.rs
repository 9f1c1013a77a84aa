use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use valuelens::evaluation::Predictions;
use valuelens::llm::{BackendConfig, ChatBackend};
use valuelens::{ValueVector, NUM_VALUES};

use crate::error::{CliError, CliResult};
use crate::settings::ConfigFile;
use crate::workspace::Workspace;

pub mod calibrate;
pub mod corpus;
pub mod evaluate;
pub mod labels;
pub mod serve;
pub mod simulate;

pub struct Ctx {
    pub config: ConfigFile,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

impl Ctx {
    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.out)
    }
}

/// One model prediction: shared per post, or per (post, rater) when
/// `rater_id` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater_id: Option<String>,
    pub values: [f64; NUM_VALUES],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounded: Option<ValueVector>,
}

/// Preliminary 19-value scores for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescoreLine {
    pub post_id: String,
    pub scores: ValueVector,
}

pub fn load_predictions(ws: &mut Workspace, path: &Path) -> CliResult<Predictions> {
    let lines: Vec<PredictionLine> = ws.read_jsonl(path)?;
    let per_rater = lines.iter().filter(|l| l.rater_id.is_some()).count();
    if per_rater == 0 {
        let mut m = BTreeMap::new();
        for l in lines {
            if m.insert(l.post_id.clone(), l.values).is_some() {
                return Err(CliError::validation(
                    "duplicate_prediction",
                    format!("{}: post `{}` twice", path.display(), l.post_id),
                ));
            }
        }
        Ok(Predictions::Shared(m))
    } else if per_rater == lines.len() {
        let mut m = BTreeMap::new();
        for l in lines {
            let key = (l.post_id, l.rater_id.expect("checked"));
            if m.contains_key(&key) {
                return Err(CliError::validation(
                    "duplicate_prediction",
                    format!("{}: `{}/{}` twice", path.display(), key.0, key.1),
                ));
            }
            m.insert(key, l.values);
        }
        Ok(Predictions::PerRater(m))
    } else {
        Err(CliError::validation(
            "mixed_predictions",
            format!("{}: mixes shared and per-rater lines", path.display()),
        ))
    }
}

pub fn load_shared(
    ws: &mut Workspace,
    path: &Path,
) -> CliResult<BTreeMap<String, [f64; NUM_VALUES]>> {
    match load_predictions(ws, path)? {
        Predictions::Shared(m) => Ok(m),
        Predictions::PerRater(_) => Err(CliError::validation(
            "expected_shared_predictions",
            format!("{}: expected one prediction per post", path.display()),
        )),
    }
}

pub fn shared_lines(m: &BTreeMap<String, [f64; NUM_VALUES]>) -> Vec<PredictionLine> {
    m.iter()
        .map(|(p, v)| PredictionLine {
            post_id: p.clone(),
            rater_id: None,
            values: *v,
            rounded: None,
        })
        .collect()
}

/// Backend from a TOML file, or the seeded mock when none is given. `jobs`
/// caps request concurrency.
pub fn load_backend(
    ws: &mut Workspace,
    path: &Option<PathBuf>,
    jobs: Option<usize>,
) -> CliResult<(BackendConfig, Box<dyn ChatBackend>)> {
    let mut cfg = match path {
        Some(p) => {
            let text = ws.read(p)?;
            toml::from_str::<BackendConfig>(&text).map_err(|e| {
                CliError::validation("backend_config", format!("{}: {e}", p.display()))
            })?
        }
        None => BackendConfig::default(),
    };
    if let Some(j) = jobs {
        cfg.max_concurrency = cfg.max_concurrency.min(j.max(1));
    }
    cfg.validate()?;
    let backend = cfg.build()?;
    log::info!("backend: {}", backend.describe());
    Ok((cfg, backend))
}

pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn summary(command: &str, outputs: Vec<String>, extra: Value) -> Value {
    let mut v = serde_json::json!({"command": command, "outputs": outputs});
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

pub fn require(path: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    path.clone()
        .ok_or_else(|| CliError::validation("missing_argument", format!("{what} is required")))
}
