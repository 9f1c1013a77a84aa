use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SyntheticWorld;
use crate::calibration::{
    demean_rows, pca, select_vcq, train_personal_models, PersonalConfig, RaterProfile, VCQ_LEN,
};
use crate::consensus::AnnotationRecord;
use crate::evaluation::{
    holdout_split, human_crowd, human_human, model_agreement, AgreementOptions, Predictions,
    HOLDOUT_FRACTION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub personal: PersonalConfig,
    pub holdout_fraction: f64,
    pub vcq_len: usize,
    pub split_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            personal: PersonalConfig::default(),
            holdout_fraction: HOLDOUT_FRACTION,
            vcq_len: VCQ_LEN,
            split_seed: 0,
        }
    }
}

/// Mean rho per condition on the held-out posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub human_human: Option<f64>,
    pub human_consensus: Option<f64>,
    pub zero_shot: Option<f64>,
    pub fine_tuned: Option<f64>,
    pub personalized: Option<f64>,
    pub holdout_records: usize,
}

/// Full synthetic run: pre-study PCA -> VCQ -> profiles -> personal models
/// trained on non-holdout posts -> agreement on holdout posts.
pub fn personalization_study(
    world: &SyntheticWorld,
    cfg: &StudyConfig,
) -> Result<StudyResult, Box<dyn std::error::Error + Send + Sync>> {
    let records = world.records();
    let (train, hold) = holdout_split(
        records.iter().map(|r| r.post_id.as_str()),
        cfg.holdout_fraction,
        cfg.split_seed,
    );
    let basis = pca(&demean_rows(&world.prestudy_matrix()))?;
    let vcq = select_vcq(&basis, cfg.vcq_len)?;
    let profiles: BTreeMap<String, RaterProfile> = world
        .calibration_pool()
        .iter()
        .map(|a| a.profile(&vcq).map(|p| (p.rater_id.clone(), p)))
        .collect::<Result<_, _>>()?;
    let ft = world.fine_tuned_predictions();
    let (train_recs, hold_recs): (Vec<AnnotationRecord>, Vec<AnnotationRecord>) = records
        .into_iter()
        .partition(|r| train.contains(&r.post_id));
    debug_assert!(hold_recs.iter().all(|r| hold.contains(&r.post_id)));
    let models = train_personal_models(&train_recs, &profiles, &ft, &vcq, &cfg.personal)?;
    let mut per = BTreeMap::new();
    for r in &hold_recs {
        let p = models.predict(&profiles[&r.rater_id], &ft[&r.post_id])?;
        per.insert((r.post_id.clone(), r.rater_id.clone()), p.values);
    }
    let opts = AgreementOptions::default();
    Ok(StudyResult {
        human_human: human_human(&hold_recs, &opts)?.mean_rho,
        human_consensus: human_crowd(&hold_recs, &opts)?.mean_rho,
        zero_shot: model_agreement(
            "zero_shot",
            &Predictions::Shared(world.zero_shot_predictions()),
            &hold_recs,
            &opts,
        )?
        .mean_rho,
        fine_tuned: model_agreement("fine_tuned", &Predictions::Shared(ft), &hold_recs, &opts)?
            .mean_rho,
        personalized: model_agreement(
            "personalized",
            &Predictions::PerRater(per),
            &hold_recs,
            &opts,
        )?
        .mean_rho,
        holdout_records: hold_recs.len(),
    })
}
