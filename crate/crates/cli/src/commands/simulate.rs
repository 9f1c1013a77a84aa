use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};
use valuelens::simulation::{generate_world, SimConfig};
use valuelens::ValueId;

use super::{shared_lines, summary, Ctx};
use crate::error::CliResult;
use crate::settings::resolve;

/// Every `SimConfig` field, as an optional override.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n_raters: Option<usize>,
    #[arg(long)]
    pub n_posts: Option<usize>,
    #[arg(long)]
    pub posts_per_rater: Option<usize>,
    /// Heterogeneity level.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub bias_sd: Option<f64>,
    #[arg(long)]
    pub bias_factors: Option<usize>,
    #[arg(long)]
    pub bias_factor_share: Option<f64>,
    #[arg(long)]
    pub projection: Option<f64>,
    /// Values raters project their own priorities onto.
    #[arg(long, value_delimiter = ',')]
    pub projected_values: Option<Vec<ValueId>>,
    #[arg(long)]
    pub popularity_sd: Option<f64>,
    #[arg(long)]
    pub prestudy_raters: Option<usize>,
    #[arg(long)]
    pub prestudy_posts: Option<usize>,
    #[arg(long)]
    pub fine_tuned_sd: Option<f64>,
    #[arg(long)]
    pub zero_shot_sd: Option<f64>,
    #[arg(long)]
    pub zero_shot_scale: Option<f64>,
    #[arg(long)]
    pub zero_shot_shift: Option<f64>,
    #[arg(long)]
    pub integer_proxies: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn simulate(args: &SimulateArgs, ctx: &Ctx) -> CliResult<Value> {
    let (cfg, settings): (SimConfig, _) = resolve("simulate", &ctx.config, args)?;
    cfg.validate()?;
    let world = generate_world(&cfg)?;
    let records = world.records();
    let mut ws = ctx.workspace();
    ws.stage_jsonl("posts.jsonl", &world.corpus_posts());
    ws.stage_jsonl("records.jsonl", &records);
    ws.stage("prestudy_matrix.csv", world.prestudy_matrix().to_csv());
    ws.stage_jsonl("calibration_answers.jsonl", &world.calibration_pool());
    ws.stage_jsonl(
        "predictions_zero_shot.jsonl",
        &shared_lines(&world.zero_shot_predictions()),
    );
    ws.stage_jsonl(
        "predictions_fine_tuned.jsonl",
        &shared_lines(&world.fine_tuned_predictions()),
    );
    let outputs = ws.commit("simulate", &settings)?;
    Ok(summary(
        "simulate",
        outputs,
        json!({"posts": world.posts.len(), "raters": world.raters.len(), "records": records.len()}),
    ))
}
