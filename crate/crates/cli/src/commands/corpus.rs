//! ingest, filter, prescore, sample.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use valuelens::corpus::{
    sampled_posts, stratified_sample, FilterConfig, FilterVerdict, Post, SampleOptions,
};
use valuelens::llm::{annotate_batch, BatchPolicy, QuarantineEntry, Template};

use super::{load_backend, require, summary, Ctx, PrescoreLine};
use crate::error::{CliError, CliResult};
use crate::settings::resolve;

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct IngestArgs {
    /// Raw corpus (JSONL, one post per line).
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    pub corpus: Option<PathBuf>,
}

pub fn ingest(args: &IngestArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (IngestSettings, _) = resolve("ingest", &ctx.config, args)?;
    let path = require(&s.corpus, "corpus path")?;
    let mut ws = ctx.workspace();
    let raw: Vec<Post> = ws.read_jsonl(&path)?;
    let n_raw = raw.len();
    let mut by_id: BTreeMap<String, Post> = BTreeMap::new();
    let mut dropped = 0usize;
    for mut p in raw {
        p.text = normalize(&p.text);
        if let Some((_, t)) = &mut p.parent {
            *t = normalize(t);
        }
        match by_id.get(&p.id) {
            Some(prev) if *prev == p => dropped += 1,
            Some(_) => {
                return Err(CliError::validation(
                    "conflicting_duplicate",
                    format!("post `{}` appears twice with different content", p.id),
                ))
            }
            None => {
                by_id.insert(p.id.clone(), p);
            }
        }
    }
    let posts: Vec<Post> = by_id.into_values().collect();
    ws.stage_jsonl("posts.jsonl", &posts);
    let outputs = ws.commit("ingest", &settings)?;
    Ok(summary(
        "ingest",
        outputs,
        json!({"read": n_raw, "posts": posts.len(), "duplicates_dropped": dropped}),
    ))
}

/// Unix line endings, no surrounding whitespace.
fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n").trim().to_string()
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct FilterArgs {
    /// Posts to screen [default: <out>/posts.jsonl].
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Backend config (TOML) [default: seeded mock].
    #[arg(long)]
    pub backend: Option<PathBuf>,
    /// Highest NSFW rating that still passes.
    #[arg(long)]
    pub nsfw_max: Option<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    pub posts: Option<PathBuf>,
    pub backend: Option<PathBuf>,
    pub nsfw_max: u8,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            posts: None,
            backend: None,
            nsfw_max: FilterConfig::default().nsfw_max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictLine {
    pub post_id: String,
    pub kept: bool,
    pub verdict: FilterVerdict,
}

pub fn filter(args: &FilterArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (FilterSettings, _) = resolve("filter", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let posts: Vec<Post> = ws.read_jsonl(&ws.path(&s.posts, "posts.jsonl"))?;
    let (cfg, backend) = load_backend(&mut ws, &s.backend, ctx.jobs)?;
    let policy = BatchPolicy::from(&cfg);
    let comp = annotate_batch(
        &posts,
        Template::Comprehensibility,
        backend.as_ref(),
        &policy,
    )?;
    let nsfw = annotate_batch(&posts, Template::Nsfw, backend.as_ref(), &policy)?;
    let mut quarantine: Vec<QuarantineEntry> = comp.quarantine.clone();
    quarantine.extend(nsfw.quarantine.iter().cloned());
    quarantine.sort_by(|a, b| (&a.post_id, a.template.id()).cmp(&(&b.post_id, b.template.id())));

    let config = FilterConfig {
        nsfw_max: s.nsfw_max,
    };
    let mut verdicts = Vec::new();
    let mut kept = Vec::new();
    for p in &posts {
        let (Some(c), Some(n)) = (comp.results.get(&p.id), nsfw.results.get(&p.id)) else {
            continue;
        };
        let verdict = FilterVerdict::from_reports(c.filter(), n.filter());
        let pass = verdict.passes(config).map_err(|e| {
            CliError::validation("invalid_verdict", format!("post `{}`: {e}", p.id))
        })?;
        if pass {
            kept.push(p.clone());
        }
        verdicts.push(VerdictLine {
            post_id: p.id.clone(),
            kept: pass,
            verdict,
        });
    }
    ws.stage_jsonl("filter_verdicts.jsonl", &verdicts);
    ws.stage_jsonl("filtered_posts.jsonl", &kept);
    ws.stage_jsonl("filter_quarantine.jsonl", &quarantine);
    let outputs = ws.commit("filter", &settings)?;
    Ok(summary(
        "filter",
        outputs,
        json!({
            "posts": posts.len(),
            "kept": kept.len(),
            "rejected": verdicts.len() - kept.len(),
            "quarantined": quarantine.len(),
            "backend": backend.describe(),
        }),
    ))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PrescoreArgs {
    /// Posts to score [default: <out>/filtered_posts.jsonl].
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Backend config (TOML) [default: seeded mock].
    #[arg(long)]
    pub backend: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PrescoreSettings {
    pub posts: Option<PathBuf>,
    pub backend: Option<PathBuf>,
}

pub fn prescore(args: &PrescoreArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (PrescoreSettings, _) = resolve("prescore", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let posts: Vec<Post> = ws.read_jsonl(&ws.path(&s.posts, "filtered_posts.jsonl"))?;
    let (cfg, backend) = load_backend(&mut ws, &s.backend, ctx.jobs)?;
    let outcome = annotate_batch(
        &posts,
        Template::Values,
        backend.as_ref(),
        &BatchPolicy::from(&cfg),
    )?;
    let lines: Vec<PrescoreLine> = outcome
        .results
        .iter()
        .filter_map(|(id, r)| {
            r.values().map(|v| PrescoreLine {
                post_id: id.clone(),
                scores: *v,
            })
        })
        .collect();
    ws.stage_jsonl("prescores.jsonl", &lines);
    ws.stage_jsonl("prescore_quarantine.jsonl", &outcome.quarantine);
    let outputs = ws.commit("prescore", &settings)?;
    Ok(summary(
        "prescore",
        outputs,
        json!({
            "posts": posts.len(),
            "scored": lines.len(),
            "quarantined": outcome.quarantine.len(),
            "retries": outcome.retries.values().sum::<u32>(),
            "backend": backend.describe(),
        }),
    ))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SampleArgs {
    /// Candidate posts [default: <out>/filtered_posts.jsonl].
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Preliminary scores [default: <out>/prescores.jsonl].
    #[arg(long)]
    pub prescores: Option<PathBuf>,
    /// CSV of `user_id,weight`; users not listed get weight 1.
    #[arg(long)]
    pub user_weights: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSettings {
    pub posts: Option<PathBuf>,
    pub prescores: Option<PathBuf>,
    pub user_weights: Option<PathBuf>,
    pub seed: u64,
}

pub fn sample(args: &SampleArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (SampleSettings, _) = resolve("sample", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let posts: Vec<Post> = ws.read_jsonl(&ws.path(&s.posts, "filtered_posts.jsonl"))?;
    let scores: Vec<PrescoreLine> = ws.read_jsonl(&ws.path(&s.prescores, "prescores.jsonl"))?;
    let prelim = scores.into_iter().map(|l| (l.post_id, l.scores)).collect();
    let mut options = SampleOptions::default();
    if let Some(p) = &s.user_weights {
        let text = ws.read(p)?;
        options.user_weights = parse_weights(&text).map_err(|m| {
            CliError::validation("malformed_input", format!("{}: {m}", p.display()))
        })?;
    }
    let manifest = stratified_sample(&posts, &prelim, s.seed, &options);
    let pool: Vec<Post> = sampled_posts(&posts, &manifest)
        .into_iter()
        .cloned()
        .collect();
    ws.stage_jsonl("sample_manifest.jsonl", &manifest);
    ws.stage_jsonl("pool.jsonl", &pool);
    let outputs = ws.commit("sample", &settings)?;
    Ok(summary(
        "sample",
        outputs,
        json!({"entries": manifest.len(), "pool": pool.len()}),
    ))
}

fn parse_weights(text: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let (Some(user), Some(w)) = (rec.get(0), rec.get(1)) else {
            return Err(format!("row {}: expected user_id,weight", i + 2));
        };
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| format!("row {}: bad weight `{w}`", i + 2))?;
        if !w.is_finite() || w < 0.0 {
            return Err(format!(
                "row {}: weight must be a non-negative number",
                i + 2
            ));
        }
        out.insert(user.trim().to_string(), w);
    }
    Ok(out)
}
