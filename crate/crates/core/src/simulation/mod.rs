//! Synthetic annotator populations with known ground truth.
//!
//! A rater's rating of value `v` on post `p` is
//! `clamp(round(s + b + gamma * h * x + eps))` where `s` is the post's latent
//! score, `b` the rater's bias on `v` (low-rank across values), `h` the
//! rater's own score on `v`, `x = s / 6` the value's salience in the post,
//! and `eps ~ N(0, sigma_r)`. `eta` scales both bias and projection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod study;
pub use study::{personalization_study, StudyConfig, StudyResult};

use crate::calibration::{DenseMatrix, RaterProfile, RowKey, Vcq};
use crate::consensus::AnnotationRecord;
use crate::corpus::{FeedSource, Post};
use crate::rounding::round_half_up;
use crate::value_system::{LikertRating, ValueId, ValueTree, ValueVector, LIKERT_MAX, NUM_VALUES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
}

pub const PARTIES: [&str; 3] = ["democrat", "independent", "republican"];

/// Values into which raters project their own values by default.
pub const DEFAULT_PROJECTED: [ValueId; 8] = [
    ValueId::Dominance,
    ValueId::Resources,
    ValueId::Achievement,
    ValueId::SelfDirectedThoughts,
    ValueId::SelfDirectedActions,
    ValueId::Stimulation,
    ValueId::PersonalSecurity,
    ValueId::SocietalSecurity,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_raters: usize,
    pub n_posts: usize,
    pub posts_per_rater: usize,
    /// Heterogeneity level scaling bias and projection.
    pub eta: f64,
    pub noise_sd: f64,
    /// Probability a latent score is exactly 0.
    pub sparsity: f64,
    pub bias_sd: f64,
    /// Rank of the shared bias structure across values.
    pub bias_factors: usize,
    /// Share of bias variance carried by the shared factors.
    pub bias_factor_share: f64,
    pub projection: f64,
    pub projected_values: Vec<ValueId>,
    /// Log-normal spread of post popularity; drives uneven rater counts.
    pub popularity_sd: f64,
    pub prestudy_raters: usize,
    pub prestudy_posts: usize,
    pub fine_tuned_sd: f64,
    pub zero_shot_sd: f64,
    /// Zero-shot proxy sees `zero_shot_scale * s + zero_shot_shift`.
    pub zero_shot_scale: f64,
    pub zero_shot_shift: f64,
    /// Round proxy outputs to the rating scale like a chat model's labels.
    /// Off by default: integer outputs tie often, and Spearman then favours
    /// them over any real-valued competitor.
    pub integer_proxies: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_raters: 60,
            n_posts: 300,
            posts_per_rater: 30,
            eta: 1.0,
            noise_sd: 2.0,
            sparsity: 0.7,
            bias_sd: 1.2,
            bias_factors: 4,
            bias_factor_share: 0.7,
            projection: 1.5,
            projected_values: DEFAULT_PROJECTED.to_vec(),
            popularity_sd: 0.8,
            prestudy_raters: 51,
            prestudy_posts: 30,
            fine_tuned_sd: 0.6,
            zero_shot_sd: 2.0,
            zero_shot_scale: 0.5,
            zero_shot_shift: 1.0,
            integer_proxies: false,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_raters == 0 || self.n_posts == 0 {
            return bad("need at least one rater and one post");
        }
        if self.posts_per_rater == 0 || self.posts_per_rater > self.n_posts {
            return bad("posts_per_rater must be in 1..=n_posts");
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad("sparsity must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.bias_factor_share) {
            return bad("bias_factor_share must be in [0, 1]");
        }
        for (name, x) in [
            ("eta", self.eta),
            ("noise_sd", self.noise_sd),
            ("bias_sd", self.bias_sd),
            ("projection", self.projection),
            ("popularity_sd", self.popularity_sd),
            ("fine_tuned_sd", self.fine_tuned_sd),
            ("zero_shot_sd", self.zero_shot_sd),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        if self.bias_factors == 0 {
            return bad("bias_factors must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPost {
    pub id: String,
    pub scores: [f64; NUM_VALUES],
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRater {
    pub id: String,
    pub bias: [f64; NUM_VALUES],
    pub gamma: f64,
    pub noise_sd: f64,
    pub personal_values: [f64; NUM_VALUES],
    pub age: u32,
    pub partisanship: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: SimConfig,
    pub posts: Vec<SimPost>,
    pub raters: Vec<SimRater>,
    pub prestudy_posts: Vec<SimPost>,
    pub prestudy_raters: Vec<SimRater>,
}

// RNG stream tags
const TAG_POSTS: u64 = 1;
const TAG_RATERS: u64 = 2;
const TAG_FACTORS: u64 = 3;
const TAG_PLAN: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_PROXY: u64 = 6;
const TAG_PRE_POSTS: u64 = 7;
const TAG_PRE_RATERS: u64 = 8;

fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) | ((a & 0xFF_FFFF) << 28) | (b & 0xFFF_FFFF));
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gen_posts(cfg: &SimConfig, tag: u64, prefix: &str, n: usize) -> Vec<SimPost> {
    let pop = Normal::new(0.0, cfg.popularity_sd).expect("validated sd");
    (0..n)
        .map(|i| {
            let mut rng = stream(cfg.seed, tag, i as u64, 0);
            let scores = std::array::from_fn(|_| {
                if rng.random_bool(cfg.sparsity) {
                    0.0
                } else {
                    rng.random_range(1.0..=f64::from(LIKERT_MAX))
                }
            });
            SimPost {
                id: format!("{prefix}{:04}", i + 1),
                scores,
                popularity: pop.sample(&mut rng).exp(),
            }
        })
        .collect()
}

fn gen_raters(
    cfg: &SimConfig,
    tag: u64,
    prefix: &str,
    n: usize,
    loadings: &[Vec<f64>],
) -> Vec<SimRater> {
    let k = cfg.bias_factors;
    let (share_f, share_i) = (
        cfg.bias_factor_share.sqrt(),
        (1.0 - cfg.bias_factor_share).sqrt(),
    );
    (0..n)
        .map(|r| {
            let mut rng = stream(cfg.seed, tag, r as u64, 0);
            let z: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
            let bias = std::array::from_fn(|v| {
                let shared: f64 =
                    loadings[v].iter().zip(&z).map(|(l, z)| l * z).sum::<f64>() / (k as f64).sqrt();
                cfg.eta * cfg.bias_sd * (share_f * shared + share_i * normal(&mut rng))
            });
            let personal_values = std::array::from_fn(|_| normal(&mut rng));
            SimRater {
                id: format!("{prefix}{:03}", r + 1),
                bias,
                gamma: cfg.eta * cfg.projection * rng.random_range(0.5..1.5),
                noise_sd: cfg.noise_sd * rng.random_range(0.75..1.25),
                personal_values,
                age: rng.random_range(18..=75),
                partisanship: PARTIES[rng.random_range(0..PARTIES.len())].to_string(),
            }
        })
        .collect()
}

pub fn generate_world(config: &SimConfig) -> Result<SyntheticWorld, SimError> {
    config.validate()?;
    let mut frng = stream(config.seed, TAG_FACTORS, 0, 0);
    let loadings: Vec<Vec<f64>> = (0..NUM_VALUES)
        .map(|_| {
            (0..config.bias_factors)
                .map(|_| normal(&mut frng))
                .collect()
        })
        .collect();
    Ok(SyntheticWorld {
        config: config.clone(),
        posts: gen_posts(config, TAG_POSTS, "post-", config.n_posts),
        raters: gen_raters(config, TAG_RATERS, "rater-", config.n_raters, &loadings),
        prestudy_posts: gen_posts(config, TAG_PRE_POSTS, "pre-post-", config.prestudy_posts),
        prestudy_raters: gen_raters(
            config,
            TAG_PRE_RATERS,
            "pre-rater-",
            config.prestudy_raters,
            &loadings,
        ),
    })
}

impl SyntheticWorld {
    fn projected(&self) -> [bool; NUM_VALUES] {
        let mut m = [false; NUM_VALUES];
        for v in &self.config.projected_values {
            m[v.index()] = true;
        }
        m
    }

    /// Deterministic in (seed, rater, post) regardless of call order.
    fn rate(&self, rater: &SimRater, rater_key: u64, post: &SimPost, post_key: u64) -> ValueVector {
        let mask = self.projected();
        let mut rng = stream(self.config.seed, TAG_NOISE, rater_key, post_key);
        let reals = std::array::from_fn(|v| {
            let s = post.scores[v];
            let proj = if mask[v] {
                rater.gamma * rater.personal_values[v] * s / f64::from(LIKERT_MAX)
            } else {
                0.0
            };
            let eps = rater.noise_sd * normal(&mut rng);
            s + rater.bias[v] + proj + eps
        });
        ValueVector::from_reals(&reals)
    }

    /// Each rater draws `posts_per_rater` distinct posts, weighted by popularity.
    pub fn assignment_plan(&self) -> Vec<(String, String)> {
        let weights: Vec<f64> = self.posts.iter().map(|p| p.popularity).collect();
        let mut plan = Vec::new();
        for (r, rater) in self.raters.iter().enumerate() {
            let mut rng = stream(self.config.seed, TAG_PLAN, r as u64, 0);
            let picks = index::sample_weighted(
                &mut rng,
                weights.len(),
                |i| weights[i],
                self.config.posts_per_rater,
            )
            .expect("positive finite weights");
            let mut picks: Vec<usize> = picks.into_iter().collect();
            picks.sort_unstable();
            plan.extend(
                picks
                    .into_iter()
                    .map(|p| (self.posts[p].id.clone(), rater.id.clone())),
            );
        }
        plan
    }

    /// Records for `(post, rater)` pairs; `expanded` lists the high-level
    /// branches with any nonzero leaf.
    pub fn sample_ratings(
        &self,
        plan: &[(String, String)],
    ) -> Result<Vec<AnnotationRecord>, SimError> {
        let posts: BTreeMap<&str, (usize, &SimPost)> = self
            .posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), (i, p)))
            .collect();
        let raters: BTreeMap<&str, (usize, &SimRater)> = self
            .raters
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), (i, r)))
            .collect();
        let tree = ValueTree::default();
        plan.iter()
            .map(|(p, r)| {
                let (pi, post) = posts.get(p.as_str()).ok_or_else(|| SimError::UnknownId {
                    kind: "post",
                    id: p.clone(),
                })?;
                let (ri, rater) = raters.get(r.as_str()).ok_or_else(|| SimError::UnknownId {
                    kind: "rater",
                    id: r.clone(),
                })?;
                let ratings = self.rate(rater, *ri as u64, post, *pi as u64);
                let mut rec = AnnotationRecord::new(p.clone(), r.clone(), ratings);
                rec.expanded = expanded_branches(&tree, &ratings);
                Ok(rec)
            })
            .collect()
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.sample_ratings(&self.assignment_plan())
            .expect("plan uses world ids")
    }

    /// Dense pre-study ratings: every pre-study rater on every pre-study post.
    pub fn prestudy_records(&self) -> Vec<AnnotationRecord> {
        let mut out = Vec::new();
        for (ri, r) in self.prestudy_raters.iter().enumerate() {
            for (pi, p) in self.prestudy_posts.iter().enumerate() {
                let key = (1 << 20) | ri as u64;
                out.push(AnnotationRecord::new(
                    &p.id,
                    &r.id,
                    self.rate(r, key, p, pi as u64),
                ));
            }
        }
        out
    }

    pub fn prestudy_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_records(&self.prestudy_records()).expect("pre-study is dense")
    }

    /// Each main rater's answers to every pre-study (post, value) row.
    pub fn calibration_pool(&self) -> Vec<CalibrationAnswers> {
        self.raters
            .iter()
            .enumerate()
            .map(|(ri, r)| {
                let mut answers = Vec::with_capacity(self.prestudy_posts.len() * NUM_VALUES);
                for (pi, p) in self.prestudy_posts.iter().enumerate() {
                    let v = self.rate(r, (2 << 20) | ri as u64, p, pi as u64);
                    for (value, rating) in v.iter() {
                        answers.push((
                            RowKey {
                                post_id: p.id.clone(),
                                value,
                            },
                            rating,
                        ));
                    }
                }
                CalibrationAnswers {
                    rater_id: r.id.clone(),
                    answers,
                    demographics: demographics(r),
                    personal_values: r.personal_values,
                }
            })
            .collect()
    }

    /// Consensus-model stand-in: latent score plus modest noise.
    pub fn fine_tuned_predictions(&self) -> BTreeMap<String, [f64; NUM_VALUES]> {
        self.proxy(0, |s, rng| s + self.config.fine_tuned_sd * normal(rng))
    }

    /// Base-model stand-in: compressed, shifted and noisier.
    pub fn zero_shot_predictions(&self) -> BTreeMap<String, [f64; NUM_VALUES]> {
        let c = &self.config;
        self.proxy(1, |s, rng| {
            c.zero_shot_scale * s + c.zero_shot_shift + c.zero_shot_sd * normal(rng)
        })
    }

    fn proxy(
        &self,
        which: u64,
        f: impl Fn(f64, &mut ChaCha8Rng) -> f64,
    ) -> BTreeMap<String, [f64; NUM_VALUES]> {
        self.posts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream(self.config.seed, TAG_PROXY, which, i as u64);
                let v = std::array::from_fn(|k| {
                    let x = f(p.scores[k], &mut rng);
                    if self.config.integer_proxies {
                        round_half_up(x).clamp(0.0, f64::from(LIKERT_MAX))
                    } else {
                        soft_clamp(x)
                    }
                });
                (p.id.clone(), v)
            })
            .collect()
    }

    /// Corpus-shaped posts so the world can flow through the text pipeline.
    pub fn corpus_posts(&self) -> Vec<Post> {
        self.posts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let top: Vec<&str> = ValueId::ALL
                    .iter()
                    .filter(|v| p.scores[v.index()] >= 3.0)
                    .map(|v| v.key())
                    .collect();
                let source = if i % 2 == 0 {
                    FeedSource::Fyp
                } else {
                    FeedSource::Following
                };
                let text = format!(
                    "Synthetic post {} expressing: {}",
                    p.id,
                    if top.is_empty() {
                        "nothing in particular".to_string()
                    } else {
                        top.join(", ")
                    }
                );
                Post::new(
                    p.id.clone(),
                    text,
                    None,
                    source,
                    format!("user-{:02}", i % 10),
                )
                .expect("non-empty")
            })
            .collect()
    }
}

/// Strictly increasing map of the reals onto (0, 6) that is close to the
/// identity inside the scale, so proxy scores keep their full ordering.
pub fn soft_clamp(x: f64) -> f64 {
    const K: f64 = 4.0;
    let softplus = |t: f64| (K * t).exp().ln_1p() / K;
    let softplus = |t: f64| if K * t > 30.0 { t } else { softplus(t) };
    softplus(x) - softplus(x - f64::from(LIKERT_MAX))
}

fn demographics(r: &SimRater) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("age".to_string(), r.age.to_string()),
        ("partisanship".to_string(), r.partisanship.clone()),
    ])
}

fn expanded_branches(tree: &ValueTree, v: &ValueVector) -> Vec<String> {
    let set: BTreeSet<&str> = v
        .iter()
        .filter(|(_, r)| r.get() > 0)
        .map(|(k, _)| tree.parent_id(k))
        .collect();
    set.into_iter().map(String::from).collect()
}

/// A rater's answers to the whole pre-study item pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAnswers {
    pub rater_id: String,
    pub answers: Vec<(RowKey, LikertRating)>,
    pub demographics: BTreeMap<String, String>,
    pub personal_values: [f64; NUM_VALUES],
}

impl CalibrationAnswers {
    /// Profile restricted to the questionnaire's items, in its order.
    pub fn profile(&self, vcq: &Vcq) -> Result<RaterProfile, SimError> {
        let by_key: BTreeMap<(&str, ValueId), LikertRating> = self
            .answers
            .iter()
            .map(|(k, r)| ((k.post_id.as_str(), k.value), *r))
            .collect();
        let vcq_answers = vcq
            .items
            .iter()
            .map(|it| {
                by_key
                    .get(&(it.post_id.as_str(), it.value))
                    .copied()
                    .ok_or_else(|| SimError::UnknownId {
                        kind: "calibration item",
                        id: format!("{}/{}", it.post_id, it.value.key()),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut p = RaterProfile::new(self.rater_id.clone(), vcq_answers);
        p.demographics = self.demographics.clone();
        p.personal_values = Some(self.personal_values);
        Ok(p)
    }
}

/// Matrix whose rows fall into `blocks` disjoint blocks of `block_rows`
/// rows; block `b` varies only along rater factor `b` (orthogonal factors),
/// with decreasing strength and random sign, plus small noise.
pub fn planted_factor_matrix(
    blocks: usize,
    block_rows: usize,
    raters: usize,
    noise: f64,
    seed: u64,
) -> DenseMatrix {
    assert!(raters >= blocks, "need at least one rater per factor");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // disjoint supports make the factors exactly orthogonal
    let per = raters / blocks;
    let factor = |b: usize, j: usize| -> f64 {
        if j / per == b && j < per * blocks {
            if j % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        }
    };
    let mut keys = Vec::new();
    let mut data = Vec::new();
    for b in 0..blocks {
        let strength = 3.0 * (blocks - b) as f64;
        for i in 0..block_rows {
            keys.push(RowKey {
                post_id: format!("block{b}-row{i:03}"),
                value: ValueId::ALL[i % NUM_VALUES],
            });
            // random sign keeps column means near zero
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let amp = sign * strength * rng.random_range(0.5..1.0);
            for j in 0..raters {
                data.push(amp * factor(b, j) + noise * normal(&mut rng));
            }
        }
    }
    DenseMatrix::new(
        keys,
        (0..raters).map(|j| format!("r{j:02}")).collect(),
        data,
    )
    .expect("shape by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{demean_rows, pca, select_vcq};
    use crate::consensus::{consensus_label, group_by_post};
    use crate::evaluation::{human_human, AgreementOptions};

    fn quiet(eta: f64, noise: f64) -> SimConfig {
        SimConfig {
            eta,
            noise_sd: noise,
            ..SimConfig::default()
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate_world(&SimConfig::default()).unwrap();
        let b = generate_world(&SimConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn no_noise_no_heterogeneity_is_unanimous() {
        let w = generate_world(&quiet(0.0, 0.0)).unwrap();
        let recs = w.records();
        let by_post: BTreeMap<&str, &SimPost> =
            w.posts.iter().map(|p| (p.id.as_str(), p)).collect();
        for r in &recs {
            assert_eq!(
                r.ratings,
                ValueVector::from_reals(&by_post[r.post_id.as_str()].scores)
            );
        }
        for (post, list) in group_by_post(&recs).unwrap() {
            let vs: Vec<_> = list.iter().map(|r| r.ratings).collect();
            assert_eq!(
                consensus_label(&vs).unwrap(),
                ValueVector::from_reals(&by_post[post].scores)
            );
        }
        let hh = human_human(&recs, &AgreementOptions::default()).unwrap();
        assert_eq!(hh.mean_rho, Some(1.0));
    }

    #[test]
    fn sparsity_rate() {
        let cfg = SimConfig {
            sparsity: 0.9,
            n_posts: 500,
            ..SimConfig::default()
        };
        let w = generate_world(&cfg).unwrap();
        let zeros = w
            .posts
            .iter()
            .flat_map(|p| p.scores)
            .filter(|&s| s == 0.0)
            .count();
        let n = (500 * NUM_VALUES) as f64;
        let rate = zeros as f64 / n;
        // 4 binomial standard errors
        let se = (0.9 * 0.1 / n).sqrt();
        assert!((rate - 0.9).abs() < 4.0 * se, "{rate}");
    }

    #[test]
    fn soft_clamp_is_monotone_and_bounded() {
        let xs: Vec<f64> = (-80..=120).map(|i| f64::from(i) * 0.1).collect();
        for w in xs.windows(2) {
            assert!(soft_clamp(w[0]) < soft_clamp(w[1]));
        }
        assert!(soft_clamp(-8.0) > 0.0 && soft_clamp(12.0) < 6.0);
        assert!((soft_clamp(3.0) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_config() {
        let cfg = SimConfig {
            posts_per_rater: 500,
            ..SimConfig::default()
        };
        assert!(generate_world(&cfg).is_err());
        let w = generate_world(&SimConfig::default()).unwrap();
        assert!(w
            .sample_ratings(&[("nope".into(), "rater-001".into())])
            .is_err());
    }

    #[test]
    fn plan_shape() {
        let w = generate_world(&SimConfig::default()).unwrap();
        let plan = w.assignment_plan();
        assert_eq!(plan.len(), 60 * 30);
        let distinct: BTreeSet<_> = plan.iter().collect();
        assert_eq!(distinct.len(), plan.len());
        let mut per_post: BTreeMap<&str, usize> = BTreeMap::new();
        for (p, _) in &plan {
            *per_post.entry(p).or_default() += 1;
        }
        assert!(per_post.values().any(|&k| k >= 9));
    }

    #[test]
    fn pool_profiles_follow_vcq() {
        let w = generate_world(&SimConfig::default()).unwrap();
        let basis = pca(&demean_rows(&w.prestudy_matrix())).unwrap();
        let vcq = select_vcq(&basis, 25).unwrap();
        let pool = w.calibration_pool();
        assert_eq!(pool[0].answers.len(), 30 * NUM_VALUES);
        let prof = pool[0].profile(&vcq).unwrap();
        assert_eq!(prof.vcq.len(), 25);
        assert_eq!(prof.age(), Some(f64::from(w.raters[0].age)));
        assert!(pool[0].profile(&Vcq::default()).is_err());
    }

    #[test]
    fn planted_blocks_are_selected_first() {
        let m = planted_factor_matrix(5, 20, 30, 0.05, 3);
        let basis = pca(&demean_rows(&m)).unwrap();
        let vcq = select_vcq(&basis, 5).unwrap();
        let blocks: BTreeSet<&str> = vcq.items.iter().map(|i| &i.post_id[..6]).collect();
        assert_eq!(blocks.len(), 5);
    }
}
