use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::agreement::{
    crowd_curve, human_crowd, human_human, model_agreement, AgreementOptions, AgreementReport,
    CrowdPoint, Predictions,
};
use super::mae::{mae_table, MaeTable};
use super::regression::{heterogeneity_regression, HeterogeneityTable};
use super::EvalError;
use crate::calibration::RaterProfile;
use crate::consensus::AnnotationRecord;
use crate::value_system::ValueVector;

/// Table rows in display order: key, label.
pub const CONDITIONS: [(&str, &str); 5] = [
    ("zero_shot", "Human vs. Base model"),
    ("human_human", "Human vs. Human"),
    ("human_consensus", "Human vs. Consensus"),
    ("fine_tuned", "Human vs. Fine-tuned model"),
    ("personalized", "Human vs. Personalized model"),
];

pub const DEFAULT_CROWD_SIZES: [usize; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub key: String,
    pub label: String,
    pub rho: Option<f64>,
    /// Percent change relative to the human-human row.
    pub delta_vs_human_human: Option<f64>,
    /// `None` when the condition's inputs were not supplied.
    pub report: Option<AgreementReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub conditions: Vec<ConditionRow>,
    pub mae: MaeTable,
    pub crowd_curve: Vec<CrowdPoint>,
    pub heterogeneity: Option<HeterogeneityTable>,
    pub holdout_posts: usize,
    pub options: AgreementOptions,
}

/// Everything `evaluate` needs. Model conditions and the MAE table use the
/// records of `holdout` posts; the crowd curve uses all records.
pub struct EvaluationInputs<'a> {
    pub records: &'a [AnnotationRecord],
    pub holdout: &'a BTreeSet<String>,
    pub zero_shot: Option<&'a Predictions>,
    pub fine_tuned: Option<&'a Predictions>,
    pub personalized: Option<&'a Predictions>,
    pub profiles: Option<&'a BTreeMap<String, RaterProfile>>,
    pub crowd_sizes: &'a [usize],
    pub seed: u64,
    pub options: AgreementOptions,
}

pub fn relative_change(rho: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (rho - baseline) / baseline.abs())
}

pub fn evaluate(inp: &EvaluationInputs) -> Result<EvaluationReport, EvalError> {
    let held: Vec<AnnotationRecord> = inp
        .records
        .iter()
        .filter(|r| inp.holdout.contains(&r.post_id))
        .cloned()
        .collect();
    let opts = &inp.options;

    let mut reports: BTreeMap<&str, AgreementReport> = BTreeMap::new();
    reports.insert("human_human", human_human(&held, opts)?);
    reports.insert("human_consensus", human_crowd(&held, opts)?);
    for (key, preds) in [
        ("zero_shot", inp.zero_shot),
        ("fine_tuned", inp.fine_tuned),
        ("personalized", inp.personalized),
    ] {
        if let Some(p) = preds {
            reports.insert(key, model_agreement(key, p, &held, opts)?);
        }
    }
    let hh = reports["human_human"].mean_rho;
    let conditions = CONDITIONS
        .iter()
        .map(|(key, label)| {
            let report = reports.remove(key);
            let rho = report.as_ref().and_then(|r| r.mean_rho);
            let delta = match (rho, hh) {
                (Some(r), Some(b)) if *key != "human_human" => relative_change(r, b),
                _ => None,
            };
            ConditionRow {
                key: key.to_string(),
                label: label.to_string(),
                rho,
                delta_vs_human_human: delta,
                report,
            }
        })
        .collect();

    let ft_labels: Option<BTreeMap<String, ValueVector>> = match inp.fine_tuned {
        Some(Predictions::Shared(m)) => Some(
            m.iter()
                .map(|(k, v)| (k.clone(), ValueVector::from_reals(v)))
                .collect(),
        ),
        _ => None,
    };
    let mae = mae_table(&held, ft_labels.as_ref())?;
    let curve = crowd_curve(inp.records, inp.crowd_sizes, inp.seed, opts)?;
    let heterogeneity = match inp.profiles {
        Some(p) if p.values().any(|x| x.personal_values.is_some()) => {
            Some(heterogeneity_regression(inp.records, p)?)
        }
        _ => None,
    };
    Ok(EvaluationReport {
        conditions,
        mae,
        crowd_curve: curve,
        heterogeneity,
        holdout_posts: inp.holdout.len(),
        options: *opts,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl EvaluationReport {
    pub fn conditions_csv(&self) -> String {
        to_csv(
            &[
                "condition",
                "label",
                "rho",
                "delta_pct_vs_human_human",
                "posts_defined",
                "posts_excluded",
            ],
            self.conditions
                .iter()
                .map(|c| {
                    vec![
                        c.key.clone(),
                        c.label.clone(),
                        fmt_opt(c.rho),
                        fmt_opt(c.delta_vs_human_human),
                        c.report
                            .as_ref()
                            .map(|r| r.posts_defined.to_string())
                            .unwrap_or_default(),
                        c.report
                            .as_ref()
                            .map(|r| r.posts_excluded.to_string())
                            .unwrap_or_default(),
                    ]
                })
                .collect(),
        )
    }

    pub fn mae_csv(&self) -> String {
        to_csv(
            &[
                "value",
                "human_crowd_mae",
                "human_crowd_se",
                "model_crowd_mae",
                "model_crowd_se",
            ],
            self.mae
                .rows
                .iter()
                .chain(std::iter::once(&self.mae.overall))
                .map(|r| {
                    vec![
                        r.label.clone(),
                        format!("{:.6}", r.human_crowd.mean),
                        format!("{:.6}", r.human_crowd.stderr),
                        fmt_opt(r.model_crowd.map(|m| m.mean)),
                        fmt_opt(r.model_crowd.map(|m| m.stderr)),
                    ]
                })
                .collect(),
        )
    }

    pub fn crowd_curve_csv(&self) -> String {
        to_csv(
            &[
                "group_size",
                "mean_rho",
                "posts",
                "comparisons",
                "excluded",
                "skipped",
            ],
            self.crowd_curve
                .iter()
                .map(|p| {
                    vec![
                        p.size.to_string(),
                        fmt_opt(p.mean_rho),
                        p.posts.to_string(),
                        p.comparisons.to_string(),
                        p.excluded.to_string(),
                        p.skipped.to_string(),
                    ]
                })
                .collect(),
        )
    }

    pub fn heterogeneity_csv(&self) -> Option<String> {
        let h = self.heterogeneity.as_ref()?;
        let rows = h
            .fits
            .iter()
            .flat_map(|(v, fit)| {
                fit.coefficients.iter().map(move |c| {
                    vec![
                        v.key().to_string(),
                        c.name.clone(),
                        format!("{:.6}", c.estimate),
                        format!("{:.6}", c.stderr),
                        format!("{:.6}", c.p_value),
                    ]
                })
            })
            .collect();
        Some(to_csv(
            &["value", "term", "estimate", "stderr", "p_value"],
            rows,
        ))
    }
}
