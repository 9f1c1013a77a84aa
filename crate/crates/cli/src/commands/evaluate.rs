use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use valuelens::consensus::AnnotationRecord;
use valuelens::evaluation::{
    evaluate as run_evaluation, AgreementOptions, Correlation, EvaluationInputs, Predictions,
    DEFAULT_CROWD_SIZES, HOLDOUT_FRACTION,
};

use super::calibrate::{load_holdout, load_profiles, split_records};
use super::{load_predictions, summary, Ctx};
use crate::error::{CliError, CliResult};
use crate::settings::resolve;

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct EvaluateArgs {
    /// Annotation records [default: <out>/records.jsonl].
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Held-out split [default: <out>/holdout.json, else a fresh split].
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Model conditions to score (zero_shot, fine_tuned, personalized).
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<String>>,
    /// [default: <out>/predictions_zero_shot.jsonl]
    #[arg(long)]
    pub zero_shot: Option<PathBuf>,
    /// [default: <out>/predictions_fine_tuned.jsonl]
    #[arg(long)]
    pub fine_tuned: Option<PathBuf>,
    /// [default: <out>/predictions_personalized.jsonl]
    #[arg(long)]
    pub personalized: Option<PathBuf>,
    /// Rater profiles; enables the heterogeneity regression when they
    /// carry personal values [default: <out>/profiles.jsonl if present].
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub crowd_sizes: Option<Vec<usize>>,
    /// Seed for crowd subsampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// spearman or pearson.
    #[arg(long, value_parser = parse_correlation)]
    pub correlation: Option<Correlation>,
    #[arg(long)]
    pub min_raters: Option<usize>,
    /// Round model outputs before comparing.
    #[arg(long)]
    pub round_model: Option<bool>,
    /// Used only when no holdout file exists.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    pub records: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
    pub conditions: Vec<String>,
    pub zero_shot: Option<PathBuf>,
    pub fine_tuned: Option<PathBuf>,
    pub personalized: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub crowd_sizes: Vec<usize>,
    pub seed: u64,
    pub correlation: Correlation,
    pub min_raters: usize,
    pub round_model: bool,
    pub holdout_fraction: f64,
    pub split_seed: u64,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        let o = AgreementOptions::default();
        EvaluateSettings {
            records: None,
            holdout: None,
            conditions: MODEL_CONDITIONS.iter().map(|s| s.to_string()).collect(),
            zero_shot: None,
            fine_tuned: None,
            personalized: None,
            profiles: None,
            crowd_sizes: DEFAULT_CROWD_SIZES.to_vec(),
            seed: 0,
            correlation: o.correlation,
            min_raters: o.min_raters,
            round_model: o.round_model,
            holdout_fraction: HOLDOUT_FRACTION,
            split_seed: 0,
        }
    }
}

fn parse_correlation(s: &str) -> Result<Correlation, String> {
    match s {
        "spearman" => Ok(Correlation::Spearman),
        "pearson" => Ok(Correlation::Pearson),
        _ => Err("expected `spearman` or `pearson`".into()),
    }
}

pub const MODEL_CONDITIONS: [&str; 3] = ["zero_shot", "fine_tuned", "personalized"];

pub fn evaluate(args: &EvaluateArgs, ctx: &Ctx) -> CliResult<Value> {
    let (s, settings): (EvaluateSettings, _) = resolve("evaluate", &ctx.config, args)?;
    if let Some(c) = s
        .conditions
        .iter()
        .find(|c| !MODEL_CONDITIONS.contains(&c.as_str()))
    {
        return Err(CliError::validation(
            "invalid_config",
            format!(
                "unknown condition `{c}`; expected one of {}",
                MODEL_CONDITIONS.join(", ")
            ),
        ));
    }
    if s.min_raters < 2 {
        return Err(CliError::validation(
            "invalid_config",
            "min_raters must be at least 2",
        ));
    }
    let mut ws = ctx.workspace();
    let records_path = ws.path(&s.records, "records.jsonl");
    let records: Vec<AnnotationRecord> = ws.read_jsonl(&records_path)?;
    let holdout = match load_holdout(&mut ws, &s.holdout)? {
        Some(h) => h,
        None => split_records(&records, s.holdout_fraction, s.split_seed),
    };

    let mut preds: BTreeMap<&str, Predictions> = BTreeMap::new();
    for (key, explicit) in [
        ("zero_shot", &s.zero_shot),
        ("fine_tuned", &s.fine_tuned),
        ("personalized", &s.personalized),
    ] {
        if !s.conditions.iter().any(|c| c == key) {
            continue;
        }
        let path = ws.path(explicit, &format!("predictions_{key}.jsonl"));
        if explicit.is_none() && !path.exists() {
            log::warn!(
                "no predictions for `{key}` at {}; condition skipped",
                path.display()
            );
            continue;
        }
        preds.insert(key, load_predictions(&mut ws, &path)?);
    }
    let profiles_path = ws.path(&s.profiles, "profiles.jsonl");
    let profiles = if s.profiles.is_some() || profiles_path.exists() {
        Some(load_profiles(&mut ws, &profiles_path)?)
    } else {
        None
    };

    let report = run_evaluation(&EvaluationInputs {
        records: &records,
        holdout: &holdout.posts,
        zero_shot: preds.get("zero_shot"),
        fine_tuned: preds.get("fine_tuned"),
        personalized: preds.get("personalized"),
        profiles: profiles.as_ref(),
        crowd_sizes: &s.crowd_sizes,
        seed: s.seed,
        options: AgreementOptions {
            correlation: s.correlation,
            min_raters: s.min_raters,
            round_model: s.round_model,
            ..AgreementOptions::default()
        },
    })?;

    ws.stage_json("report.json", &report);
    ws.stage("conditions.csv", report.conditions_csv());
    ws.stage("mae.csv", report.mae_csv());
    ws.stage("crowd_curve.csv", report.crowd_curve_csv());
    if let Some(h) = report.heterogeneity_csv() {
        ws.stage("heterogeneity.csv", h);
    }
    let rhos: BTreeMap<&str, Option<f64>> = report
        .conditions
        .iter()
        .map(|c| (c.key.as_str(), c.rho))
        .collect();
    let outputs = ws.commit("evaluate", &settings)?;
    Ok(summary(
        "evaluate",
        outputs,
        json!({"holdout_posts": report.holdout_posts, "rho": rhos}),
    ))
}
