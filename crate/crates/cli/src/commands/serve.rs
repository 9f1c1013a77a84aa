use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use valuelens::calibration::Vcq;
use valuelens::corpus::Post;
use valuelens::ValueTree;
use valuelens_service::{AssignmentMode, Fixtures, ServiceConfig, Study};

use super::Ctx;
use crate::error::{CliError, CliResult};
use crate::settings::resolve;

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long)]
    pub port: Option<u16>,
    /// Annotation pool [default: <out>/pool.jsonl].
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Directory with attention.json, training.json and gating.json
    /// [default: built-in stand-ins].
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Questionnaire [default: <out>/vcq.toml, else built-in].
    #[arg(long)]
    pub vcq: Option<PathBuf>,
    /// Event log and snapshots [default: <out>/study].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub posts_per_session: Option<usize>,
    /// High-level rating that expands a branch.
    #[arg(long)]
    pub threshold: Option<u8>,
    /// uniform or balanced.
    #[arg(long, value_parser = parse_assignment)]
    pub assignment: Option<AssignmentMode>,
}

fn parse_assignment(s: &str) -> Result<AssignmentMode, String> {
    match s {
        "uniform" => Ok(AssignmentMode::Uniform),
        "balanced" => Ok(AssignmentMode::Balanced),
        _ => Err("expected `uniform` or `balanced`".into()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeSettings {
    pub host: String,
    pub port: u16,
    pub pool: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub vcq: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub posts_per_session: usize,
    pub threshold: u8,
    pub assignment: AssignmentMode,
}

impl Default for ServeSettings {
    fn default() -> Self {
        let c = ServiceConfig::default();
        ServeSettings {
            host: "127.0.0.1".into(),
            port: 8080,
            pool: None,
            fixtures: None,
            vcq: None,
            data_dir: None,
            seed: c.seed,
            posts_per_session: c.posts_per_session,
            threshold: c.threshold,
            assignment: c.assignment,
        }
    }
}

pub fn serve(args: &ServeArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, _): (ServeSettings, _) = resolve("serve", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let pool: Vec<Post> = ws.read_jsonl(&ws.path(&s.pool, "pool.jsonl"))?;
    let vcq_path = ws.path(&s.vcq, "vcq.toml");
    let vcq = if s.vcq.is_some() || vcq_path.exists() {
        let text = ws.read(&vcq_path)?;
        Vcq::from_toml(&text).map_err(|e| {
            CliError::validation("malformed_input", format!("{}: {e}", vcq_path.display()))
        })?
    } else {
        Vcq::default()
    };
    let fixtures = match &s.fixtures {
        Some(dir) => Fixtures::from_dir(dir, vcq).map_err(|m| {
            CliError::validation("malformed_input", format!("{}: {m}", dir.display()))
        })?,
        None => Fixtures {
            vcq,
            ..Fixtures::default()
        },
    };
    let config = ServiceConfig {
        seed: s.seed,
        posts_per_session: s.posts_per_session,
        threshold: s.threshold,
        assignment: s.assignment,
        data_dir: Some(ws.path(&s.data_dir, "study")),
    };
    let study = Study::open(config, fixtures, ValueTree::default(), pool)
        .map_err(|e| CliError::validation(e.code(), e.to_string()))?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal("runtime", e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((s.host.as_str(), s.port))
            .await
            .map_err(|e| {
                CliError::validation("bind_failed", format!("{}:{}: {e}", s.host, s.port))
            })?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::internal("bind_failed", e.to_string()))?;
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{}", json!({"listening": addr.to_string()}));
        let _ = stdout.flush();
        drop(stdout);
        valuelens_service::serve(study, listener)
            .await
            .map_err(|e| CliError::internal("server_failed", e.to_string()))
    })?;
    Ok(json!({"command": "serve", "stopped": true}))
}
