//! build-vcq, train-personal, predict.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use valuelens::calibration::{
    demean_rows, pca, select_vcq, train_personal_models, DenseMatrix, ForestConfig, PersonalConfig,
    PersonalModelSet, RaterProfile, Vcq, BUNDLE_MAGIC, VCQ_LEN,
};
use valuelens::consensus::AnnotationRecord;
use valuelens::corpus::Post;
use valuelens::evaluation::{holdout_split, HOLDOUT_FRACTION};
use valuelens::llm::{annotate_batch, BatchPolicy, Template};
use valuelens::simulation::CalibrationAnswers;

use super::{csv_string, load_backend, load_shared, summary, Ctx, PredictionLine};
use crate::error::{CliError, CliResult};
use crate::settings::resolve;
use crate::workspace::Workspace;

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct BuildVcqArgs {
    /// Pre-study matrix CSV [default: <out>/prestudy_matrix.csv].
    pub prestudy: Option<PathBuf>,
    /// Questionnaire length.
    #[arg(long)]
    pub k: Option<usize>,
    /// Raters' full calibration answers (JSONL); when given, profiles
    /// restricted to the new questionnaire are written too.
    #[arg(long)]
    pub answers: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildVcqSettings {
    pub prestudy: Option<PathBuf>,
    pub k: usize,
    pub answers: Option<PathBuf>,
}

impl Default for BuildVcqSettings {
    fn default() -> Self {
        BuildVcqSettings {
            prestudy: None,
            k: VCQ_LEN,
            answers: None,
        }
    }
}

pub fn build_vcq(args: &BuildVcqArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (BuildVcqSettings, _) = resolve("build_vcq", &ctx.config, args)?;
    let mut ws = ctx.workspace();
    let path = ws.path(&s.prestudy, "prestudy_matrix.csv");
    let text = ws.read(&path)?;
    let m = DenseMatrix::from_csv(&text)
        .map_err(|e| CliError::validation("malformed_input", format!("{}: {e}", path.display())))?;
    let basis = pca(&demean_rows(&m))?;
    let vcq = select_vcq(&basis, s.k)?;
    let eigen = json!({
        "raters": basis.raters,
        "eigenvalues": basis.eigenvalues,
        "explained_ratio": basis.explained_ratio,
        "cumulative_ratio_k": basis.cumulative_ratio(s.k),
        "components": basis.components,
    });
    ws.stage("vcq.toml", vcq.to_toml());
    ws.stage_json("eigenraters.json", &eigen);
    let mut extra = json!({
        "rows": m.n_rows(),
        "raters": m.n_cols(),
        "items": vcq.len(),
        "cumulative_ratio_k": basis.cumulative_ratio(s.k),
    });
    if let Some(p) = &s.answers {
        let answers: Vec<CalibrationAnswers> = ws.read_jsonl(p)?;
        let profiles = answers
            .iter()
            .map(|a| a.profile(&vcq))
            .collect::<Result<Vec<RaterProfile>, _>>()?;
        ws.stage_jsonl("profiles.jsonl", &profiles);
        extra["profiles"] = json!(profiles.len());
    }
    let outputs = ws.commit("build-vcq", &settings)?;
    Ok(summary("build-vcq", outputs, extra))
}

/// Post-level split shared by training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutFile {
    pub fraction: f64,
    pub split_seed: u64,
    pub train_posts: usize,
    pub posts: BTreeSet<String>,
}

pub fn split_records(records: &[AnnotationRecord], fraction: f64, seed: u64) -> HoldoutFile {
    let (train, hold) = holdout_split(records.iter().map(|r| r.post_id.as_str()), fraction, seed);
    HoldoutFile {
        fraction,
        split_seed: seed,
        train_posts: train.len(),
        posts: hold,
    }
}

fn load_vcq(ws: &mut Workspace, explicit: &Option<PathBuf>) -> CliResult<Vcq> {
    let path = ws.path(explicit, "vcq.toml");
    if explicit.is_none() && !path.exists() {
        log::info!("no vcq.toml in the output directory; using the built-in questionnaire");
        return Ok(Vcq::default());
    }
    let text = ws.read(&path)?;
    Vcq::from_toml(&text)
        .map_err(|e| CliError::validation("malformed_input", format!("{}: {e}", path.display())))
}

pub(crate) fn load_profiles(
    ws: &mut Workspace,
    path: &Path,
) -> CliResult<BTreeMap<String, RaterProfile>> {
    let list: Vec<RaterProfile> = ws.read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for p in list {
        if out.contains_key(&p.rater_id) {
            return Err(CliError::validation(
                "duplicate_profile",
                format!("{}: rater `{}` twice", path.display(), p.rater_id),
            ));
        }
        out.insert(p.rater_id.clone(), p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TrainPersonalArgs {
    /// Annotation records [default: <out>/records.jsonl].
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Rater profiles [default: <out>/profiles.jsonl].
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Consensus-model predictions used as features
    /// [default: <out>/predictions_fine_tuned.jsonl].
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Questionnaire [default: <out>/vcq.toml, else built-in].
    #[arg(long)]
    pub vcq: Option<PathBuf>,
    /// Training posts drawn, stratified by rater count.
    #[arg(long)]
    pub posts: Option<usize>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share of posts held out from training.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPersonalSettings {
    pub records: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub vcq: Option<PathBuf>,
    pub posts: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: Option<usize>,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub split_seed: u64,
}

impl Default for TrainPersonalSettings {
    fn default() -> Self {
        let p = PersonalConfig::default();
        TrainPersonalSettings {
            records: None,
            profiles: None,
            predictions: None,
            vcq: None,
            posts: p.train_posts,
            n_trees: p.forest.n_trees,
            max_depth: p.forest.max_depth,
            min_samples_leaf: p.forest.min_samples_leaf,
            max_features: p.forest.max_features,
            seed: p.forest.seed,
            holdout_fraction: HOLDOUT_FRACTION,
            split_seed: 0,
        }
    }
}

pub fn train_personal(args: &TrainPersonalArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (TrainPersonalSettings, _) = resolve("train_personal", &ctx.config, args)?;
    if !(0.0..1.0).contains(&s.holdout_fraction) {
        return Err(CliError::validation(
            "invalid_config",
            "holdout_fraction must be in [0, 1)",
        ));
    }
    let mut ws = ctx.workspace();
    let records: Vec<AnnotationRecord> = ws.read_jsonl(&ws.path(&s.records, "records.jsonl"))?;
    let profiles_path = ws.path(&s.profiles, "profiles.jsonl");
    let profiles = load_profiles(&mut ws, &profiles_path)?;
    let preds_path = ws.path(&s.predictions, "predictions_fine_tuned.jsonl");
    let preds = load_shared(&mut ws, &preds_path)?;
    let vcq = load_vcq(&mut ws, &s.vcq)?;

    let holdout = split_records(&records, s.holdout_fraction, s.split_seed);
    let train: Vec<AnnotationRecord> = records
        .iter()
        .filter(|r| !holdout.posts.contains(&r.post_id))
        .cloned()
        .collect();
    let config = PersonalConfig {
        forest: ForestConfig {
            n_trees: s.n_trees,
            max_depth: s.max_depth,
            min_samples_leaf: s.min_samples_leaf,
            max_features: s.max_features,
            bootstrap: true,
            seed: s.seed,
        },
        train_posts: s.posts,
        ..PersonalConfig::default()
    };
    let set = train_personal_models(&train, &profiles, &preds, &vcq, &config)?;

    let mut rows = Vec::new();
    for (value, imps, constant) in set.feature_importance() {
        for (name, imp) in set.feature_names.iter().zip(&imps) {
            rows.push(vec![
                value.key().to_string(),
                name.clone(),
                format!("{imp:.6}"),
                constant.to_string(),
            ]);
        }
    }
    ws.stage("personal_models.bundle", set.to_bundle());
    ws.stage(
        "feature_importance.csv",
        csv_string(&["value", "feature", "importance", "constant_model"], rows),
    );
    ws.stage_json("holdout.json", &holdout);
    let outputs = ws.commit("train-personal", &settings)?;
    Ok(summary(
        "train-personal",
        outputs,
        json!({
            "training_posts": set.training_posts,
            "training_rows": set.training_rows,
            "holdout_posts": holdout.posts.len(),
            "features": set.n_features(),
        }),
    ))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PredictArgs {
    /// Personal model bundle or backend config (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Posts for a backend model [default: <out>/posts.jsonl].
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Records naming the (post, rater) pairs for a bundle
    /// [default: <out>/records.jsonl].
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Rater profiles for a bundle [default: <out>/profiles.jsonl].
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Consensus-model predictions fed to a bundle
    /// [default: <out>/predictions_fine_tuned.jsonl].
    #[arg(long)]
    pub consensus_predictions: Option<PathBuf>,
    /// Restrict to held-out posts [default: <out>/holdout.json if present].
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Output is written to predictions_<name>.jsonl.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSettings {
    pub model: Option<PathBuf>,
    pub posts: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub consensus_predictions: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
    pub name: Option<String>,
}

pub(crate) fn load_holdout(
    ws: &mut Workspace,
    explicit: &Option<PathBuf>,
) -> CliResult<Option<HoldoutFile>> {
    let path = ws.path(explicit, "holdout.json");
    if explicit.is_none() && !path.exists() {
        return Ok(None);
    }
    ws.read_json(&path).map(Some)
}

pub fn predict(args: &PredictArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (PredictSettings, _) = resolve("predict", &ctx.config, args)?;
    let model_path = super::require(&s.model, "--model")?;
    let mut ws = ctx.workspace();
    let text = ws.read(&model_path)?;
    let holdout = load_holdout(&mut ws, &s.holdout)?;
    let keep = |post: &str| holdout.as_ref().is_none_or(|h| h.posts.contains(post));

    let (name, lines, extra) = if text.starts_with(BUNDLE_MAGIC) {
        let set = PersonalModelSet::from_bundle(&text).map_err(|e| {
            CliError::validation("malformed_input", format!("{}: {e}", model_path.display()))
        })?;
        let records: Vec<AnnotationRecord> =
            ws.read_jsonl(&ws.path(&s.records, "records.jsonl"))?;
        let profiles_path = ws.path(&s.profiles, "profiles.jsonl");
        let profiles = load_profiles(&mut ws, &profiles_path)?;
        let consensus_path = ws.path(&s.consensus_predictions, "predictions_fine_tuned.jsonl");
        let consensus = load_shared(&mut ws, &consensus_path)?;
        let mut pairs: Vec<(&str, &str)> = records
            .iter()
            .filter(|r| keep(&r.post_id))
            .map(|r| (r.post_id.as_str(), r.rater_id.as_str()))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let lines = pairs
            .par_iter()
            .map(|&(post, rater)| {
                let prof = profiles.get(rater).ok_or_else(|| {
                    CliError::validation(
                        "missing_profile",
                        format!("no profile for rater `{rater}`"),
                    )
                })?;
                let pred = consensus.get(post).ok_or_else(|| {
                    CliError::validation(
                        "missing_predictions",
                        format!("no consensus prediction for post `{post}`"),
                    )
                })?;
                let out = set.predict(prof, pred)?;
                Ok(PredictionLine {
                    post_id: post.to_string(),
                    rater_id: Some(rater.to_string()),
                    values: out.values,
                    rounded: Some(out.rounded),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let n = lines.len();
        (
            s.name.clone().unwrap_or_else(|| "personalized".into()),
            lines,
            json!({"kind": "personal", "pairs": n}),
        )
    } else {
        let (cfg, backend) = load_backend(&mut ws, &Some(model_path.clone()), ctx.jobs)?;
        let posts: Vec<Post> = ws.read_jsonl(&ws.path(&s.posts, "posts.jsonl"))?;
        let posts: Vec<Post> = posts.into_iter().filter(|p| keep(&p.id)).collect();
        let outcome = annotate_batch(
            &posts,
            Template::Values,
            backend.as_ref(),
            &BatchPolicy::from(&cfg),
        )?;
        let lines: Vec<PredictionLine> = outcome
            .results
            .iter()
            .filter_map(|(id, r)| {
                r.values().map(|v| PredictionLine {
                    post_id: id.clone(),
                    rater_id: None,
                    values: v.to_f64(),
                    rounded: None,
                })
            })
            .collect();
        let name = s.name.clone().unwrap_or_else(|| "model".into());
        ws.stage_jsonl(
            &format!("predictions_{name}_quarantine.jsonl"),
            &outcome.quarantine,
        );
        let extra = json!({
            "kind": "backend",
            "backend": backend.describe(),
            "posts": posts.len(),
            "quarantined": outcome.quarantine.len(),
        });
        (name, lines, extra)
    };
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(CliError::validation(
            "invalid_config",
            "name must be non-empty [A-Za-z0-9_-]",
        ));
    }
    ws.stage_jsonl(&format!("predictions_{name}.jsonl"), &lines);
    let outputs = ws.commit("predict", &settings)?;
    Ok(summary("predict", outputs, extra))
}
