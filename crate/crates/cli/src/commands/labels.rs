//! consensus, export-finetune.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use valuelens::consensus::{
    consensus_report, select_finetune_set, AnnotationRecord, FinetuneSelection,
};
use valuelens::corpus::Post;
use valuelens::llm::finetune_lines;

use super::{summary, Ctx};
use crate::error::{CliError, CliResult};
use crate::settings::resolve;

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ConsensusArgs {
    /// Annotation records [default: <out>/records.jsonl].
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusSettings {
    pub records: Option<PathBuf>,
}

pub fn consensus(args: &ConsensusArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (ConsensusSettings, _) = resolve("consensus", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let records: Vec<AnnotationRecord> = ws.read_jsonl(&ws.path(&s.records, "records.jsonl"))?;
    let report = consensus_report(&records)?;
    let scores: Vec<f64> = report.iter().filter_map(|c| c.score).collect();
    let mean_score = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    let mut raters: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &report {
        *raters.entry(c.k).or_default() += 1;
    }
    let summary_json = json!({
        "records": records.len(),
        "posts": report.len(),
        "defined_scores": scores.len(),
        "mean_score": mean_score,
        "posts_by_raters": raters,
    });
    ws.stage_jsonl("consensus.jsonl", &report);
    ws.stage_json("consensus_summary.json", &summary_json);
    let outputs = ws.commit("consensus", &settings)?;
    Ok(summary("consensus", outputs, summary_json))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ExportFinetuneArgs {
    /// Annotation records [default: <out>/records.jsonl].
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Post texts [default: <out>/posts.jsonl].
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Size of the random pool ranked by consensus.
    #[arg(long)]
    pub pool: Option<usize>,
    /// Posts kept from the top of the ranking.
    #[arg(long)]
    pub keep: Option<usize>,
    /// Raters a post needs to enter the pool.
    #[arg(long)]
    pub min_raters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportFinetuneSettings {
    pub records: Option<PathBuf>,
    pub posts: Option<PathBuf>,
    pub pool: usize,
    pub keep: usize,
    pub min_raters: usize,
    pub seed: u64,
}

impl Default for ExportFinetuneSettings {
    fn default() -> Self {
        let d = FinetuneSelection::default();
        ExportFinetuneSettings {
            records: None,
            posts: None,
            pool: d.pool_size,
            keep: d.keep,
            min_raters: d.min_raters,
            seed: d.seed,
        }
    }
}

pub fn export_finetune(args: &ExportFinetuneArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (ExportFinetuneSettings, _) = resolve("export_finetune", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let records: Vec<AnnotationRecord> = ws.read_jsonl(&ws.path(&s.records, "records.jsonl"))?;
    let posts: Vec<Post> = ws.read_jsonl(&ws.path(&s.posts, "posts.jsonl"))?;
    let set = select_finetune_set(
        &records,
        &FinetuneSelection {
            pool_size: s.pool,
            min_raters: s.min_raters,
            keep: s.keep,
            seed: s.seed,
        },
    )?;
    let by_id: BTreeMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut chosen = Vec::with_capacity(set.selected.len());
    let mut labels = BTreeMap::new();
    for sp in &set.selected {
        let p = by_id.get(sp.post_id.as_str()).ok_or_else(|| {
            CliError::validation(
                "missing_post",
                format!("selected post `{}` has no text", sp.post_id),
            )
        })?;
        chosen.push((*p).clone());
        labels.insert(sp.post_id.clone(), sp.label);
    }
    let mut body = String::new();
    for line in finetune_lines(&chosen, &labels)? {
        body.push_str(&line);
        body.push('\n');
    }
    ws.stage("finetune.jsonl", body);
    ws.stage_json("finetune_selection.json", &set);
    let outputs = ws.commit("export-finetune", &settings)?;
    Ok(summary(
        "export-finetune",
        outputs,
        json!({"qualifying": set.qualifying, "pool": set.pool, "selected": set.selected.len()}),
    ))
}
