//! `valuelens` command line: one subcommand per pipeline stage, all writing
//! into a shared output directory with a manifest of inputs, outputs,
//! settings and seeds.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod error;
pub mod settings;
pub mod workspace;

use commands::calibrate::{BuildVcqArgs, PredictArgs, TrainPersonalArgs};
use commands::corpus::{FilterArgs, IngestArgs, PrescoreArgs, SampleArgs};
use commands::evaluate::EvaluateArgs;
use commands::labels::{ConsensusArgs, ExportFinetuneArgs};
use commands::serve::ServeArgs;
use commands::simulate::SimulateArgs;
use commands::Ctx;
pub use error::{CliError, CliResult, Kind};
use settings::ConfigFile;

#[derive(Debug, Parser)]
#[command(
    name = "valuelens",
    version,
    about = "Value-expression annotation and evaluation pipeline"
)]
pub struct Cli {
    /// TOML config; each subcommand reads the table named after it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads and backend concurrency cap.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a raw corpus.
    Ingest(IngestArgs),
    /// Comprehensibility and NSFW screening.
    Filter(FilterArgs),
    /// Preliminary value scores for sampling.
    Prescore(PrescoreArgs),
    /// Value-stratified annotation pool.
    Sample(SampleArgs),
    /// Run the annotation study service.
    Serve(ServeArgs),
    /// Consensus labels and scores per post.
    Consensus(ConsensusArgs),
    /// High-agreement fine-tuning export.
    ExportFinetune(ExportFinetuneArgs),
    /// Eigenrater PCA and calibration questionnaire.
    BuildVcq(BuildVcqArgs),
    /// Per-value personal models.
    TrainPersonal(TrainPersonalArgs),
    /// Predictions from a personal bundle or a model backend.
    Predict(PredictArgs),
    /// Agreement, MAE, crowd curve and heterogeneity tables.
    Evaluate(EvaluateArgs),
    /// Synthetic study with known ground truth.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Filter(_) => "filter",
            Command::Prescore(_) => "prescore",
            Command::Sample(_) => "sample",
            Command::Serve(_) => "serve",
            Command::Consensus(_) => "consensus",
            Command::ExportFinetune(_) => "export-finetune",
            Command::BuildVcq(_) => "build-vcq",
            Command::TrainPersonal(_) => "train-personal",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Simulate(_) => "simulate",
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<serde_json::Value> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let jobs = cli.jobs.or(config.jobs);
    if jobs == Some(0) {
        return Err(CliError::validation(
            "invalid_config",
            "jobs must be positive",
        ));
    }
    if let Some(j) = jobs {
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    let ctx = Ctx { config, out, jobs };
    log::debug!("running {}", cli.command.name());
    match &cli.command {
        Command::Ingest(a) => commands::corpus::ingest(a, &ctx),
        Command::Filter(a) => commands::corpus::filter(a, &ctx),
        Command::Prescore(a) => commands::corpus::prescore(a, &ctx),
        Command::Sample(a) => commands::corpus::sample(a, &ctx),
        Command::Serve(a) => commands::serve::serve(a, &ctx),
        Command::Consensus(a) => commands::labels::consensus(a, &ctx),
        Command::ExportFinetune(a) => commands::labels::export_finetune(a, &ctx),
        Command::BuildVcq(a) => commands::calibrate::build_vcq(a, &ctx),
        Command::TrainPersonal(a) => commands::calibrate::train_personal(a, &ctx),
        Command::Predict(a) => commands::calibrate::predict(a, &ctx),
        Command::Evaluate(a) => commands::evaluate::evaluate(a, &ctx),
        Command::Simulate(a) => commands::simulate::simulate(a, &ctx),
    }
}

/// Parses the process arguments, runs, and returns the exit code. The JSON
/// summary goes to stdout; errors go to stderr as JSON.
pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}
