use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::consensus::{consensus_label, group_by_post, AnnotationRecord};
use crate::value_system::{ValueId, ValueVector, NUM_VALUES};

/// Mean with the standard error of that mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<MeanSe> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanSe { mean, stderr, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    /// `None` for the overall row.
    pub value: Option<ValueId>,
    pub label: String,
    pub human_crowd: MeanSe,
    pub model_crowd: Option<MeanSe>,
}

/// Per-value MAE rows plus an overall row. Per-value errors are over posts;
/// the overall row is the mean of the 19 row means with the standard error
/// across values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeTable {
    pub rows: Vec<MaeRow>,
    pub overall: MaeRow,
    pub posts: usize,
    /// Posts with fewer than two raters.
    pub excluded_posts: usize,
}

/// Per-post, per-value human-to-crowd error: the mean over raters of the
/// distance to the unrounded mean of the other raters.
pub fn loo_mae(values: &[f64]) -> Option<f64> {
    let k = values.len();
    if k < 2 {
        return None;
    }
    let total: f64 = values.iter().sum();
    let sum: f64 = values
        .iter()
        .map(|v| (v - (total - v) / (k - 1) as f64).abs())
        .sum();
    Some(sum / k as f64)
}

type PostGroup = (String, Vec<ValueVector>);

fn evaluable_groups(records: &[AnnotationRecord]) -> Result<(Vec<PostGroup>, usize), EvalError> {
    let groups = group_by_post(records)?;
    let total = groups.len();
    let kept: Vec<_> = groups
        .into_iter()
        .filter(|(_, l)| l.len() >= 2)
        .map(|(p, l)| (p.to_string(), l.iter().map(|r| r.ratings).collect()))
        .collect();
    if kept.is_empty() {
        return Err(EvalError::NoEvaluablePosts);
    }
    let excluded = total - kept.len();
    Ok((kept, excluded))
}

/// Human-to-crowd MAE per value over posts with at least two raters.
pub fn mae_human_crowd(records: &[AnnotationRecord]) -> Result<Vec<MeanSe>, EvalError> {
    let (groups, _) = evaluable_groups(records)?;
    Ok(ValueId::ALL
        .iter()
        .map(|v| {
            let per_post: Vec<f64> = groups
                .iter()
                .map(|(_, vs)| {
                    let xs: Vec<f64> = vs.iter().map(|x| x.get(*v).as_f64()).collect();
                    loo_mae(&xs).expect("k >= 2")
                })
                .collect();
            MeanSe::of(&per_post).expect("non-empty")
        })
        .collect())
}

/// Model-to-crowd MAE per value against the rounded consensus label, over
/// the same posts as `mae_human_crowd`.
pub fn mae_model_crowd(
    preds: &BTreeMap<String, ValueVector>,
    records: &[AnnotationRecord],
) -> Result<Vec<MeanSe>, EvalError> {
    let (groups, _) = evaluable_groups(records)?;
    let missing: Vec<String> = groups
        .iter()
        .filter(|(p, _)| !preds.contains_key(p))
        .map(|(p, _)| p.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    let labels: Vec<(ValueVector, ValueVector)> = groups
        .iter()
        .map(|(p, vs)| Ok((preds[p], consensus_label(vs)?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(ValueId::ALL
        .iter()
        .map(|v| {
            let errs: Vec<f64> = labels
                .iter()
                .map(|(pred, cons)| (pred.get(*v).as_f64() - cons.get(*v).as_f64()).abs())
                .collect();
            MeanSe::of(&errs).expect("non-empty")
        })
        .collect())
}

pub fn mae_table(
    records: &[AnnotationRecord],
    preds: Option<&BTreeMap<String, ValueVector>>,
) -> Result<MaeTable, EvalError> {
    let (groups, excluded) = evaluable_groups(records)?;
    let human = mae_human_crowd(records)?;
    let model = preds.map(|p| mae_model_crowd(p, records)).transpose()?;
    let rows: Vec<MaeRow> = ValueId::ALL
        .iter()
        .enumerate()
        .map(|(i, v)| MaeRow {
            value: Some(*v),
            label: v.display_name().to_string(),
            human_crowd: human[i],
            model_crowd: model.as_ref().map(|m| m[i]),
        })
        .collect();
    let across = |f: &dyn Fn(&MaeRow) -> Option<f64>| -> Option<MeanSe> {
        let xs: Option<Vec<f64>> = rows.iter().map(f).collect();
        xs.and_then(|xs| MeanSe::of(&xs))
    };
    let overall = MaeRow {
        value: None,
        label: "Overall".to_string(),
        human_crowd: across(&|r| Some(r.human_crowd.mean)).expect("19 rows"),
        model_crowd: across(&|r| r.model_crowd.map(|m| m.mean)),
    };
    debug_assert_eq!(rows.len(), NUM_VALUES);
    Ok(MaeTable {
        rows,
        overall,
        posts: groups.len(),
        excluded_posts: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::vv;

    #[test]
    fn hand_cases() {
        assert_eq!(loo_mae(&[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(loo_mae(&[4.0, 4.0, 4.0, 4.0]), Some(0.0));
        assert_eq!(loo_mae(&[0.0, 6.0]), Some(6.0));
        assert_eq!(loo_mae(&[3.0]), None);
    }

    #[test]
    fn model_cases() {
        let recs = vec![
            AnnotationRecord::new("p", "a", vv(&[6, 2])),
            AnnotationRecord::new("p", "b", vv(&[6, 2])),
        ];
        let same = BTreeMap::from([("p".to_string(), vv(&[6, 2]))]);
        assert!(mae_model_crowd(&same, &recs)
            .unwrap()
            .iter()
            .all(|m| m.mean == 0.0));
        let off = BTreeMap::from([("p".to_string(), vv(&[0, 2]))]);
        let m = mae_model_crowd(&off, &recs).unwrap();
        assert_eq!(m[0].mean, 6.0);
        assert_eq!(m[1].mean, 0.0);
        assert!(matches!(
            mae_model_crowd(&BTreeMap::new(), &recs),
            Err(EvalError::MissingPredictions(_))
        ));
    }

    #[test]
    fn table_layout() {
        let recs = vec![
            AnnotationRecord::new("p", "a", vv(&[1, 0, 3])),
            AnnotationRecord::new("p", "b", vv(&[2, 0, 3])),
            AnnotationRecord::new("p", "c", vv(&[3, 6, 3])),
            AnnotationRecord::new("q", "a", vv(&[3])),
        ];
        let preds = BTreeMap::from([("p".to_string(), vv(&[2, 2, 3]))]);
        let t = mae_table(&recs, Some(&preds)).unwrap();
        assert_eq!(t.rows.len(), 19);
        assert_eq!(t.excluded_posts, 1);
        assert_eq!(t.rows[0].human_crowd.mean, 1.0);
        let mean_of_rows = t.rows.iter().map(|r| r.human_crowd.mean).sum::<f64>() / 19.0;
        assert!((t.overall.human_crowd.mean - mean_of_rows).abs() < 1e-15);
        assert!(t.overall.model_crowd.is_some());
        assert_eq!(t.overall.label, "Overall");
    }

    #[test]
    fn stderr_of_mean() {
        let m = MeanSe::of(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.stderr - 1.0).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[5.0]).unwrap().stderr, 0.0);
    }
}
