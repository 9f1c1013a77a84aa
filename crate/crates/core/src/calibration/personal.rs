use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, Forest, ForestConfig};
use super::profile::RaterProfile;
use super::vcq::Vcq;
use super::CalibrationError;
use crate::consensus::AnnotationRecord;
use crate::io::write_atomic;
use crate::value_system::{ValueId, ValueVector, LIKERT_MAX, NUM_VALUES};

pub const BUNDLE_MAGIC: &str = "VALUELENS-MODEL-BUNDLE v1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonalConfig {
    pub forest: ForestConfig,
    /// Posts drawn for training, stratified by rater count.
    pub train_posts: usize,
    /// Inclusive upper rater counts of each bucket but the last.
    pub bucket_bounds: Vec<usize>,
}

impl Default for PersonalConfig {
    fn default() -> Self {
        PersonalConfig {
            forest: ForestConfig::default(),
            train_posts: 3000,
            bucket_bounds: vec![3, 6],
        }
    }
}

/// One forest per value over consensus predictions ++ VCQ answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalModelSet {
    pub config: PersonalConfig,
    pub vcq: Vcq,
    pub feature_names: Vec<String>,
    pub models: Vec<Forest>,
    pub training_posts: usize,
    pub training_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalPrediction {
    /// Forest outputs clamped to the rating scale.
    pub values: [f64; NUM_VALUES],
    pub rounded: ValueVector,
}

pub fn feature_names(vcq: &Vcq) -> Vec<String> {
    ValueId::ALL
        .iter()
        .map(|v| format!("consensus_{}", v.key()))
        .chain(
            vcq.items
                .iter()
                .enumerate()
                .map(|(i, it)| format!("vcq{:02}_{}_{}", i + 1, it.post_id, it.value.key())),
        )
        .collect()
}

fn bucket_of(k: usize, bounds: &[usize]) -> usize {
    bounds.iter().position(|&b| k <= b).unwrap_or(bounds.len())
}

/// Up to `n` posts, sampled from rater-count buckets in proportion to
/// bucket size (largest remainder), each bucket shuffled on its own stream.
pub fn select_training_posts(
    records: &[AnnotationRecord],
    n: usize,
    bounds: &[usize],
    seed: u64,
) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(&r.post_id).or_default() += 1;
    }
    let total = counts.len();
    if total <= n {
        return counts.keys().map(|s| s.to_string()).collect();
    }
    let mut buckets: Vec<Vec<&str>> = vec![Vec::new(); bounds.len() + 1];
    for (p, k) in &counts {
        buckets[bucket_of(*k, bounds)].push(p);
    }
    let exact: Vec<f64> = buckets
        .iter()
        .map(|b| n as f64 * b.len() as f64 / total as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..buckets.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut left = n - quota.iter().sum::<usize>();
    for b in order {
        if left == 0 {
            break;
        }
        if quota[b] < buckets[b].len() {
            quota[b] += 1;
            left -= 1;
        }
    }
    let mut out = BTreeSet::new();
    for (i, mut b) in buckets.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        b.shuffle(&mut rng);
        out.extend(b.into_iter().take(quota[i]).map(String::from));
    }
    out
}

fn feature_row(pred: &[f64; NUM_VALUES], profile: &RaterProfile) -> Vec<f64> {
    pred.iter()
        .copied()
        .chain(profile.vcq.iter().map(|r| r.as_f64()))
        .collect()
}

pub fn train_personal_models(
    records: &[AnnotationRecord],
    profiles: &BTreeMap<String, RaterProfile>,
    consensus_preds: &BTreeMap<String, [f64; NUM_VALUES]>,
    vcq: &Vcq,
    config: &PersonalConfig,
) -> Result<PersonalModelSet, CalibrationError> {
    let posts = select_training_posts(
        records,
        config.train_posts,
        &config.bucket_bounds,
        config.forest.seed,
    );
    let mut x = Vec::new();
    let mut rows: Vec<&AnnotationRecord> = Vec::new();
    for r in records.iter().filter(|r| posts.contains(&r.post_id)) {
        let pred = consensus_preds
            .get(&r.post_id)
            .ok_or_else(|| CalibrationError::MissingPrediction(r.post_id.clone()))?;
        let prof = profiles
            .get(&r.rater_id)
            .ok_or_else(|| CalibrationError::MissingProfile(r.rater_id.clone()))?;
        prof.check(vcq.len())?;
        x.push(feature_row(pred, prof));
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(CalibrationError::EmptyTraining(ValueId::ALL[0]));
    }
    let mut models = Vec::with_capacity(NUM_VALUES);
    for (i, v) in ValueId::ALL.iter().enumerate() {
        let y: Vec<f64> = rows.iter().map(|r| r.ratings.get(*v).as_f64()).collect();
        let forest = fit_forest(&x, &y, &config.forest, i as u64)?;
        if forest.is_constant() {
            log::warn!(
                "model for `{}` is constant; importances are all zero",
                v.key()
            );
        }
        models.push(forest);
    }
    Ok(PersonalModelSet {
        config: config.clone(),
        vcq: vcq.clone(),
        feature_names: feature_names(vcq),
        models,
        training_posts: posts.len(),
        training_rows: rows.len(),
    })
}

impl PersonalModelSet {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(
        &self,
        profile: &RaterProfile,
        consensus_pred: &[f64; NUM_VALUES],
    ) -> Result<PersonalPrediction, CalibrationError> {
        profile.check(self.vcq.len())?;
        let row = feature_row(consensus_pred, profile);
        let mut values = [0.0; NUM_VALUES];
        for (out, m) in values.iter_mut().zip(&self.models) {
            *out = m.predict(&row)?.clamp(0.0, f64::from(LIKERT_MAX));
        }
        Ok(PersonalPrediction {
            rounded: ValueVector::from_reals(&values),
            values,
        })
    }

    /// 19 x n_features impurity importances, plus whether each model is constant.
    pub fn feature_importance(&self) -> Vec<(ValueId, Vec<f64>, bool)> {
        ValueId::ALL
            .iter()
            .zip(&self.models)
            .map(|(v, m)| (*v, m.importances.clone(), m.is_constant()))
            .collect()
    }

    pub fn to_bundle(&self) -> String {
        let mut s = String::from(BUNDLE_MAGIC);
        s.push_str(&serde_json::to_string(self).expect("model set serializes"));
        s.push('\n');
        s
    }

    pub fn from_bundle(text: &str) -> Result<Self, CalibrationError> {
        let body = text.strip_prefix(BUNDLE_MAGIC).ok_or_else(|| {
            CalibrationError::Bundle("missing or unsupported bundle header".into())
        })?;
        let set: PersonalModelSet =
            serde_json::from_str(body).map_err(|e| CalibrationError::Bundle(e.to_string()))?;
        if set.models.len() != NUM_VALUES {
            return Err(CalibrationError::Bundle(format!(
                "expected {NUM_VALUES} models, got {}",
                set.models.len()
            )));
        }
        if set
            .models
            .iter()
            .any(|m| m.n_features != set.feature_names.len())
        {
            return Err(CalibrationError::Bundle(
                "feature count disagrees with feature names".into(),
            ));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        write_atomic(path, self.to_bundle().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CalibrationError::Bundle(format!("{}: {e}", path.display())))?;
        Self::from_bundle(&text)
    }
}

/// Convenience wrapper matching the per-call form of `PersonalModelSet::predict`.
pub fn predict_personal(
    models: &PersonalModelSet,
    profile: &RaterProfile,
    consensus_pred: &[f64; NUM_VALUES],
) -> Result<PersonalPrediction, CalibrationError> {
    models.predict(profile, consensus_pred)
}
