//! Multi-rater aggregation: consensus labels, per-post consensus scores,
//! and selection of the high-consensus fine-tuning set.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::spearman;
use crate::value_system::{LikertRating, ValueId, ValueVector, NUM_VALUES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("no ratings to aggregate")]
    Empty,
    #[error("need at least {need} raters, got {got}")]
    TooFewRaters { need: usize, got: usize },
    #[error("rater index {index} out of range for {k} raters")]
    Index { index: usize, k: usize },
    #[error("duplicate record for post `{post}` and rater `{rater}`")]
    Duplicate { post: String, rater: String },
}

/// One rater's ratings of one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post_id: String,
    pub rater_id: String,
    pub ratings: ValueVector,
    /// High-level branches the rater expanded, by tree node id.
    #[serde(default)]
    pub expanded: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<String>,
}

impl AnnotationRecord {
    pub fn new(
        post_id: impl Into<String>,
        rater_id: impl Into<String>,
        ratings: ValueVector,
    ) -> Self {
        AnnotationRecord {
            post_id: post_id.into(),
            rater_id: rater_id.into(),
            ratings,
            expanded: Vec::new(),
            submitted_at: None,
        }
    }
}

/// Records grouped by post, raters sorted by id within each post.
pub fn group_by_post(
    records: &[AnnotationRecord],
) -> Result<BTreeMap<&str, Vec<&AnnotationRecord>>, ConsensusError> {
    let mut out: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.post_id.as_str()).or_default().push(r);
    }
    for (post, list) in out.iter_mut() {
        list.sort_by(|a, b| a.rater_id.cmp(&b.rater_id));
        if let Some(w) = list.windows(2).find(|w| w[0].rater_id == w[1].rater_id) {
            return Err(ConsensusError::Duplicate {
                post: post.to_string(),
                rater: w[0].rater_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Per-value arithmetic mean.
pub fn mean_vector<'a>(
    ratings: impl IntoIterator<Item = &'a ValueVector>,
) -> Option<[f64; NUM_VALUES]> {
    let mut sum = [0.0; NUM_VALUES];
    let mut n = 0usize;
    for v in ratings {
        for (s, r) in sum.iter_mut().zip(v.ratings()) {
            *s += r.as_f64();
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    Some(sum.map(|s| s / n as f64))
}

/// Per-value mean rounded to the nearest integer, halves up.
pub fn consensus_label(ratings: &[ValueVector]) -> Result<ValueVector, ConsensusError> {
    let mean = mean_vector(ratings).ok_or(ConsensusError::Empty)?;
    Ok(ValueVector::from_reals(&mean))
}

/// Mean Spearman rho over all unordered rater pairs, skipping undefined
/// pairs. `None` when every pair is undefined.
pub fn consensus_score(ratings: &[ValueVector]) -> Result<Option<f64>, ConsensusError> {
    if ratings.len() < 2 {
        return Err(ConsensusError::TooFewRaters {
            need: 2,
            got: ratings.len(),
        });
    }
    let reals: Vec<[f64; NUM_VALUES]> = ratings.iter().map(ValueVector::to_f64).collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..reals.len() {
        for j in i + 1..reals.len() {
            if let Some(rho) = spearman(&reals[i], &reals[j]).expect("equal lengths") {
                sum += rho;
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Mean of every rater except `index`, with its rounded companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaveOneOut {
    pub mean: [f64; NUM_VALUES],
    pub rounded: ValueVector,
}

pub fn leave_one_out(ratings: &[ValueVector], index: usize) -> Result<LeaveOneOut, ConsensusError> {
    let k = ratings.len();
    if k < 2 {
        return Err(ConsensusError::TooFewRaters { need: 2, got: k });
    }
    if index >= k {
        return Err(ConsensusError::Index { index, k });
    }
    let mean = mean_vector(
        ratings
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, v)| v),
    )
    .expect("k >= 2");
    Ok(LeaveOneOut {
        mean,
        rounded: ValueVector::from_reals(&mean),
    })
}

/// Consensus summary for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostConsensus {
    pub post_id: String,
    pub k: usize,
    pub consensus: ValueVector,
    /// Mean pairwise rho; absent for single-rater posts or when undefined.
    pub score: Option<f64>,
}

pub fn consensus_report(
    records: &[AnnotationRecord],
) -> Result<Vec<PostConsensus>, ConsensusError> {
    let groups = group_by_post(records)?;
    groups
        .into_iter()
        .map(|(post, list)| {
            let vs: Vec<ValueVector> = list.iter().map(|r| r.ratings).collect();
            let score = if vs.len() >= 2 {
                consensus_score(&vs)?
            } else {
                None
            };
            Ok(PostConsensus {
                post_id: post.to_string(),
                k: vs.len(),
                consensus: consensus_label(&vs)?,
                score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneSelection {
    pub pool_size: usize,
    /// Raters a post needs to enter the pool.
    pub min_raters: usize,
    pub keep: usize,
    pub seed: u64,
}

impl Default for FinetuneSelection {
    fn default() -> Self {
        FinetuneSelection {
            pool_size: 1000,
            min_raters: 7,
            keep: 600,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPost {
    pub post_id: String,
    pub k: usize,
    pub score: Option<f64>,
    pub label: ValueVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSet {
    pub selected: Vec<SelectedPost>,
    /// Size of the random pool the ranking ran over.
    pub pool: usize,
    /// Posts that met the rater minimum.
    pub qualifying: usize,
}

/// Draws a random pool of posts with at least `min_raters` raters, ranks
/// it by consensus score (undefined last, ties by post id) and keeps the
/// top `keep` with their consensus labels.
pub fn select_finetune_set(
    records: &[AnnotationRecord],
    sel: &FinetuneSelection,
) -> Result<FinetuneSet, ConsensusError> {
    let groups = group_by_post(records)?;
    let mut qualifying: Vec<(&str, Vec<ValueVector>)> = groups
        .into_iter()
        .filter(|(_, l)| l.len() >= sel.min_raters.max(2))
        .map(|(p, l)| (p, l.iter().map(|r| r.ratings).collect()))
        .collect();
    let n_qualifying = qualifying.len();
    if n_qualifying < sel.pool_size {
        log::warn!(
            "only {n_qualifying} posts have at least {} raters; pool of {} requested",
            sel.min_raters,
            sel.pool_size
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sel.seed);
    qualifying.shuffle(&mut rng);
    qualifying.truncate(sel.pool_size);

    let mut scored = Vec::with_capacity(qualifying.len());
    for (post, vs) in &qualifying {
        scored.push(SelectedPost {
            post_id: post.to_string(),
            k: vs.len(),
            score: consensus_score(vs)?,
            label: consensus_label(vs)?,
        });
    }
    scored.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.post_id.cmp(&b.post_id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.post_id.cmp(&b.post_id),
    });
    let pool = scored.len();
    scored.truncate(sel.keep);
    Ok(FinetuneSet {
        selected: scored,
        pool,
        qualifying: n_qualifying,
    })
}

/// Post ids in a selection, for subset checks.
pub fn selected_ids(set: &FinetuneSet) -> BTreeSet<&str> {
    set.selected.iter().map(|s| s.post_id.as_str()).collect()
}

/// Integer vector helper used throughout tests and fixtures.
pub fn vv(xs: &[u8]) -> ValueVector {
    let mut v = ValueVector::zeros();
    for (i, &x) in xs.iter().enumerate().take(NUM_VALUES) {
        v.set(
            ValueId::ALL[i],
            LikertRating::new(x).expect("rating in range"),
        );
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_value(x: u8) -> ValueVector {
        vv(&[x])
    }

    fn ramp() -> ValueVector {
        vv(&[0, 1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4])
    }

    fn reversed(v: &ValueVector) -> ValueVector {
        let mut out = ValueVector::zeros();
        for (id, r) in v.iter() {
            out.set(id, LikertRating::new(6 - r.get()).unwrap());
        }
        out
    }

    #[test]
    fn label_cases() {
        assert_eq!(consensus_label(&[ramp()]).unwrap(), ramp());
        let l = consensus_label(&[one_value(1), one_value(2), one_value(3)]).unwrap();
        assert_eq!(l.get(ValueId::SelfDirectedThoughts).get(), 2);
        let l = consensus_label(&[one_value(1), one_value(2)]).unwrap();
        assert_eq!(l.get(ValueId::SelfDirectedThoughts).get(), 2);
        assert_eq!(consensus_label(&[]), Err(ConsensusError::Empty));
    }

    #[test]
    fn score_cases() {
        assert_eq!(consensus_score(&[ramp(), ramp()]).unwrap(), Some(1.0));
        // pairs: (a,a)=1, (a,rev)=-1, (a,rev)=-1
        let s = consensus_score(&[ramp(), ramp(), reversed(&ramp())])
            .unwrap()
            .unwrap();
        assert!((s + 1.0 / 3.0).abs() < 1e-12);
        let z = ValueVector::zeros();
        assert_eq!(consensus_score(&[z, z, z]).unwrap(), None);
        assert!(matches!(
            consensus_score(&[z]),
            Err(ConsensusError::TooFewRaters { .. })
        ));
    }

    #[test]
    fn leave_one_out_cases() {
        let l = leave_one_out(&[ramp(), reversed(&ramp())], 0).unwrap();
        assert_eq!(l.rounded, reversed(&ramp()));
        let l = leave_one_out(&[one_value(1), one_value(2), one_value(3)], 1).unwrap();
        assert_eq!(l.mean[0], 2.0);
        let l = leave_one_out(&[one_value(0), one_value(6)], 0).unwrap();
        assert_eq!(l.mean[0], 6.0);
        assert!(leave_one_out(&[ramp()], 0).is_err());
        assert!(leave_one_out(&[ramp(), ramp()], 2).is_err());
    }

    fn records_for(post: &str, vs: &[ValueVector]) -> Vec<AnnotationRecord> {
        vs.iter()
            .enumerate()
            .map(|(i, v)| AnnotationRecord::new(post, format!("r{i}"), *v))
            .collect()
    }

    #[test]
    fn finetune_selection_ranks_and_filters() {
        let noisy = vv(&[6, 0, 0, 1, 0, 0, 2, 0, 3, 0, 0, 0, 0, 0, 0, 0, 0, 5, 0]);
        let mut recs = Vec::new();
        recs.extend(records_for("a", &[ramp(); 7]));
        let mut mixed = vec![ramp(); 6];
        mixed.push(noisy);
        recs.extend(records_for("b", &mixed));
        let mut worst = vec![ramp(); 4];
        worst.extend([reversed(&ramp()); 3]);
        recs.extend(records_for("c", &worst));
        recs.extend(records_for("six", &[ramp(); 6]));
        let sel = FinetuneSelection {
            pool_size: 3,
            min_raters: 7,
            keep: 2,
            seed: 4,
        };
        let out = select_finetune_set(&recs, &sel).unwrap();
        assert_eq!(out.qualifying, 3);
        let ids: Vec<_> = out.selected.iter().map(|s| s.post_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(out.selected[0].label, ramp());
        assert_eq!(select_finetune_set(&recs, &sel).unwrap(), out);
    }

    #[test]
    fn undefined_scores_sort_last_and_duplicates_rejected() {
        let z = ValueVector::zeros();
        let mut recs = records_for("zero", &[z; 7]);
        recs.extend(records_for("ok", &[ramp(); 7]));
        let sel = FinetuneSelection {
            pool_size: 10,
            min_raters: 7,
            keep: 10,
            seed: 0,
        };
        let out = select_finetune_set(&recs, &sel).unwrap();
        assert_eq!(out.selected.last().unwrap().post_id, "zero");
        assert_eq!(out.selected.last().unwrap().score, None);
        recs.push(AnnotationRecord::new("ok", "r0", ramp()));
        assert!(matches!(
            select_finetune_set(&recs, &sel),
            Err(ConsensusError::Duplicate { .. })
        ));
    }

    fn arb_vec() -> impl Strategy<Value = ValueVector> {
        prop::array::uniform19(0u8..=6).prop_map(|a| ValueVector::from_u8(&a).unwrap())
    }

    proptest! {
        #[test]
        fn label_permutation_invariant_and_monotone(
            mut vs in prop::collection::vec(arb_vec(), 1..8),
            who in 0usize..8,
            which in 0usize..19,
        ) {
            let base = consensus_label(&vs).unwrap();
            let mut rev = vs.clone();
            rev.reverse();
            prop_assert_eq!(consensus_label(&rev).unwrap(), base);
            let who = who % vs.len();
            let id = ValueId::ALL[which];
            let cur = vs[who].get(id).get();
            if cur < 6 {
                vs[who].set(id, LikertRating::new(cur + 1).unwrap());
                let raised = consensus_label(&vs).unwrap();
                for (a, b) in raised.ratings().iter().zip(base.ratings()) {
                    prop_assert!(a >= b);
                }
            }
        }

        #[test]
        fn score_permutation_invariant(vs in prop::collection::vec(arb_vec(), 2..7)) {
            let mut rev = vs.clone();
            rev.reverse();
            let a = consensus_score(&vs).unwrap();
            let b = consensus_score(&rev).unwrap();
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
