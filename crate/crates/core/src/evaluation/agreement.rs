use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spearman::{pearson, spearman};
use super::EvalError;
use crate::consensus::{group_by_post, leave_one_out, mean_vector, AnnotationRecord};
use crate::value_system::{ValueVector, NUM_VALUES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    #[default]
    Spearman,
    Pearson,
}

impl Correlation {
    pub fn compute(self, a: &[f64], b: &[f64]) -> Option<f64> {
        match self {
            Correlation::Spearman => spearman(a, b),
            Correlation::Pearson => pearson(a, b),
        }
        .expect("vectors share the value dimension")
    }
}

/// How comparison targets are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgreementOptions {
    pub correlation: Correlation,
    /// Compare raters against the rounded crowd mean (otherwise the raw mean).
    pub round_crowd: bool,
    /// Round model outputs before comparing (otherwise real-valued).
    pub round_model: bool,
    /// Posts need this many raters to be evaluated.
    pub min_raters: usize,
}

impl Default for AgreementOptions {
    fn default() -> Self {
        AgreementOptions {
            correlation: Correlation::Spearman,
            round_crowd: true,
            round_model: false,
            min_raters: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRho {
    pub post_id: String,
    /// Mean over this post's defined comparisons.
    pub rho: Option<f64>,
    pub comparisons: usize,
    pub defined: usize,
}

/// Mean correlation across posts for one comparison condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub condition: String,
    pub mean_rho: Option<f64>,
    pub posts_defined: usize,
    pub posts_excluded: usize,
    pub comparisons: usize,
    pub comparisons_excluded: usize,
    pub per_post: Vec<PostRho>,
}

impl AgreementReport {
    fn aggregate(condition: &str, per_post: Vec<(String, Vec<Option<f64>>)>) -> Self {
        let mut rows = Vec::with_capacity(per_post.len());
        let (mut sum, mut n_def) = (0.0, 0usize);
        let (mut comps, mut comps_excl) = (0usize, 0usize);
        for (post_id, rhos) in per_post {
            let defined: Vec<f64> = rhos.iter().flatten().copied().collect();
            comps += rhos.len();
            comps_excl += rhos.len() - defined.len();
            let rho =
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            if let Some(r) = rho {
                sum += r;
                n_def += 1;
            }
            rows.push(PostRho {
                post_id,
                rho,
                comparisons: rhos.len(),
                defined: defined.len(),
            });
        }
        AgreementReport {
            condition: condition.to_string(),
            mean_rho: (n_def > 0).then(|| sum / n_def as f64),
            posts_defined: n_def,
            posts_excluded: rows.len() - n_def,
            comparisons: comps,
            comparisons_excluded: comps_excl,
            per_post: rows,
        }
    }

    /// Fraction of comparisons that were undefined.
    pub fn exclusion_rate(&self) -> f64 {
        if self.comparisons == 0 {
            0.0
        } else {
            self.comparisons_excluded as f64 / self.comparisons as f64
        }
    }
}

type Groups<'a> = Vec<(&'a str, Vec<&'a AnnotationRecord>)>;

fn evaluable<'a>(
    records: &'a [AnnotationRecord],
    opts: &AgreementOptions,
) -> Result<Groups<'a>, EvalError> {
    let groups: Groups = group_by_post(records)?
        .into_iter()
        .filter(|(_, l)| l.len() >= opts.min_raters.max(1))
        .collect();
    if groups.is_empty() {
        return Err(EvalError::NoEvaluablePosts);
    }
    Ok(groups)
}

/// Mean pairwise rho between raters of the same post.
pub fn human_human(
    records: &[AnnotationRecord],
    opts: &AgreementOptions,
) -> Result<AgreementReport, EvalError> {
    let opts = AgreementOptions {
        min_raters: opts.min_raters.max(2),
        ..*opts
    };
    let per_post = evaluable(records, &opts)?
        .into_iter()
        .map(|(post, list)| {
            let reals: Vec<_> = list.iter().map(|r| r.ratings.to_f64()).collect();
            let mut rhos = Vec::new();
            for i in 0..reals.len() {
                for j in i + 1..reals.len() {
                    rhos.push(opts.correlation.compute(&reals[i], &reals[j]));
                }
            }
            (post.to_string(), rhos)
        })
        .collect();
    Ok(AgreementReport::aggregate("human_human", per_post))
}

/// Each rater against the leave-one-out crowd of the other raters.
pub fn human_crowd(
    records: &[AnnotationRecord],
    opts: &AgreementOptions,
) -> Result<AgreementReport, EvalError> {
    let opts = AgreementOptions {
        min_raters: opts.min_raters.max(2),
        ..*opts
    };
    let mut per_post = Vec::new();
    for (post, list) in evaluable(records, &opts)? {
        let vs: Vec<ValueVector> = list.iter().map(|r| r.ratings).collect();
        let mut rhos = Vec::with_capacity(vs.len());
        for (i, v) in vs.iter().enumerate() {
            let loo = leave_one_out(&vs, i)?;
            let target = if opts.round_crowd {
                loo.rounded.to_f64()
            } else {
                loo.mean
            };
            rhos.push(opts.correlation.compute(&v.to_f64(), &target));
        }
        per_post.push((post.to_string(), rhos));
    }
    Ok(AgreementReport::aggregate("human_consensus", per_post))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdPoint {
    pub size: usize,
    pub mean_rho: Option<f64>,
    pub posts: usize,
    pub comparisons: usize,
    pub excluded: usize,
    /// (post, rater) pairs without enough other raters for this size.
    pub skipped: usize,
}

/// Agreement between a held-out rater and the rounded mean of `g` other
/// raters drawn without replacement, for each requested `g`.
///
/// Each size gets its own ChaCha8 stream (`seed`, stream = size), so adding
/// sizes does not change existing points.
pub fn crowd_curve(
    records: &[AnnotationRecord],
    sizes: &[usize],
    seed: u64,
    opts: &AgreementOptions,
) -> Result<Vec<CrowdPoint>, EvalError> {
    let groups = group_by_post(records)?;
    let mut out = Vec::with_capacity(sizes.len());
    for &g in sizes {
        if g == 0 {
            return Err(EvalError::InvalidArgument(
                "group size must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(g as u64);
        let mut per_post = Vec::new();
        let mut skipped = 0usize;
        for (post, list) in &groups {
            let vs: Vec<ValueVector> = list.iter().map(|r| r.ratings).collect();
            if vs.len() < g + 1 {
                skipped += vs.len();
                continue;
            }
            let mut rhos = Vec::with_capacity(vs.len());
            for i in 0..vs.len() {
                let others: Vec<&ValueVector> = vs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, v)| v)
                    .collect();
                let picks = index::sample(&mut rng, others.len(), g);
                let mean = mean_vector(picks.iter().map(|j| others[j])).expect("g >= 1");
                let target = if opts.round_crowd {
                    ValueVector::from_reals(&mean).to_f64()
                } else {
                    mean
                };
                rhos.push(opts.correlation.compute(&vs[i].to_f64(), &target));
            }
            per_post.push((post.to_string(), rhos));
        }
        let rep = AgreementReport::aggregate("crowd", per_post);
        out.push(CrowdPoint {
            size: g,
            mean_rho: rep.mean_rho,
            posts: rep.posts_defined,
            comparisons: rep.comparisons,
            excluded: rep.comparisons_excluded,
            skipped,
        });
    }
    Ok(out)
}

/// Model outputs to compare raters against.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    /// One vector per post, shared by every rater (zero-shot, fine-tuned).
    Shared(BTreeMap<String, [f64; NUM_VALUES]>),
    /// One vector per (post, rater) pair (personalized).
    PerRater(BTreeMap<(String, String), [f64; NUM_VALUES]>),
}

impl Predictions {
    pub fn get(&self, post: &str, rater: &str) -> Option<&[f64; NUM_VALUES]> {
        match self {
            Predictions::Shared(m) => m.get(post),
            Predictions::PerRater(m) => m.get(&(post.to_string(), rater.to_string())),
        }
    }
}

/// Each rater against a model prediction for the same post.
pub fn model_agreement(
    condition: &str,
    preds: &Predictions,
    records: &[AnnotationRecord],
    opts: &AgreementOptions,
) -> Result<AgreementReport, EvalError> {
    let groups = evaluable(records, opts)?;
    let mut missing = BTreeSet::new();
    let mut per_post = Vec::with_capacity(groups.len());
    for (post, list) in groups {
        let mut rhos = Vec::with_capacity(list.len());
        for r in list {
            match preds.get(post, &r.rater_id) {
                Some(p) => {
                    let target = if opts.round_model {
                        ValueVector::from_reals(p).to_f64()
                    } else {
                        *p
                    };
                    rhos.push(opts.correlation.compute(&r.ratings.to_f64(), &target));
                }
                None => {
                    missing.insert(match preds {
                        Predictions::Shared(_) => post.to_string(),
                        Predictions::PerRater(_) => format!("{post}/{}", r.rater_id),
                    });
                }
            }
        }
        per_post.push((post.to_string(), rhos));
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing.into_iter().collect()));
    }
    Ok(AgreementReport::aggregate(condition, per_post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::vv;

    fn rec(post: &str, rater: &str, v: ValueVector) -> AnnotationRecord {
        AnnotationRecord::new(post, rater, v)
    }

    fn ramp() -> ValueVector {
        vv(&[0, 1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4])
    }

    fn rev(v: ValueVector) -> ValueVector {
        let xs: Vec<u8> = v.ratings().iter().map(|r| 6 - r.get()).collect();
        ValueVector::from_u8(&xs).unwrap()
    }

    fn opts() -> AgreementOptions {
        AgreementOptions::default()
    }

    #[test]
    fn unanimous_is_one() {
        let recs: Vec<_> = (0..4).map(|i| rec("p", &format!("r{i}"), ramp())).collect();
        assert_eq!(human_human(&recs, &opts()).unwrap().mean_rho, Some(1.0));
        assert_eq!(human_crowd(&recs, &opts()).unwrap().mean_rho, Some(1.0));
    }

    #[test]
    fn two_rater_reverse() {
        let recs = vec![rec("p", "a", ramp()), rec("p", "b", rev(ramp()))];
        let hh = human_human(&recs, &opts()).unwrap();
        assert!((hh.mean_rho.unwrap() + 1.0).abs() < 1e-12);
        let hc = human_crowd(&recs, &opts()).unwrap();
        assert_eq!(hh.mean_rho, hc.mean_rho);
    }

    #[test]
    fn three_rater_pair_enumeration() {
        let a = ramp();
        let b = vv(&[1, 1, 2, 2, 3, 3, 0, 0, 6, 5, 4, 0, 0, 0, 1, 2, 3, 4, 5]);
        let c = vv(&[0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let recs = vec![rec("p", "a", a), rec("p", "b", b), rec("p", "c", c)];
        let pairs = [(a, b), (a, c), (b, c)];
        let expected: f64 = pairs
            .iter()
            .map(|(x, y)| spearman(&x.to_f64(), &y.to_f64()).unwrap().unwrap())
            .sum::<f64>()
            / 3.0;
        let got = human_human(&recs, &opts()).unwrap();
        assert!((got.mean_rho.unwrap() - expected).abs() < 1e-12);
        assert_eq!(got.comparisons, 3);
    }

    #[test]
    fn no_evaluable_posts() {
        let recs = vec![rec("p", "a", ramp())];
        assert!(matches!(
            human_human(&recs, &opts()),
            Err(EvalError::NoEvaluablePosts)
        ));
        assert!(matches!(
            human_human(&[], &opts()),
            Err(EvalError::NoEvaluablePosts)
        ));
    }

    #[test]
    fn undefined_comparisons_are_counted() {
        let z = ValueVector::zeros();
        let recs = vec![
            rec("p", "a", z),
            rec("p", "b", z),
            rec("q", "a", ramp()),
            rec("q", "b", ramp()),
        ];
        let hh = human_human(&recs, &opts()).unwrap();
        assert_eq!(hh.posts_defined, 1);
        assert_eq!(hh.posts_excluded, 1);
        assert_eq!(hh.comparisons, 2);
        assert_eq!(hh.comparisons_excluded, 1);
        assert_eq!(hh.mean_rho, Some(1.0));
    }

    #[test]
    fn model_agreement_cases() {
        let recs = vec![rec("p", "a", ramp()), rec("p", "b", rev(ramp()))];
        let own = Predictions::PerRater(
            recs.iter()
                .map(|r| ((r.post_id.clone(), r.rater_id.clone()), r.ratings.to_f64()))
                .collect(),
        );
        let rep = model_agreement("personalized", &own, &recs, &opts()).unwrap();
        assert_eq!(rep.mean_rho, Some(1.0));

        let constant = Predictions::Shared(BTreeMap::from([("p".to_string(), [2.0; NUM_VALUES])]));
        let rep = model_agreement("zero_shot", &constant, &recs, &opts()).unwrap();
        assert_eq!(rep.mean_rho, None);
        assert_eq!(rep.exclusion_rate(), 1.0);

        let empty = Predictions::Shared(BTreeMap::new());
        match model_agreement("x", &empty, &recs, &opts()) {
            Err(EvalError::MissingPredictions(m)) => assert_eq!(m, vec!["p".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crowd_curve_unanimous_and_size_one() {
        let recs: Vec<_> = (0..5).map(|i| rec("p", &format!("r{i}"), ramp())).collect();
        let curve = crowd_curve(&recs, &[1, 2, 4, 5], 0, &opts()).unwrap();
        assert_eq!(curve[0].mean_rho, Some(1.0));
        assert_eq!(curve[2].mean_rho, Some(1.0));
        assert_eq!(curve[3].mean_rho, None);
        assert_eq!(curve[3].skipped, 5);
        assert!(crowd_curve(&recs, &[0], 0, &opts()).is_err());
    }

    #[test]
    fn crowd_size_one_with_two_raters_is_human_human() {
        let b = vv(&[1, 1, 2, 2, 3, 3, 0, 0, 6, 5, 4, 0, 0, 0, 1, 2, 3, 4, 5]);
        let recs = vec![rec("p", "a", ramp()), rec("p", "b", b)];
        let curve = crowd_curve(&recs, &[1], 9, &opts()).unwrap();
        assert_eq!(
            curve[0].mean_rho,
            human_human(&recs, &opts()).unwrap().mean_rho
        );
    }
}
