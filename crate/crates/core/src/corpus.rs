//! Posts, context rendering, the LLM filter gates, and value-stratified
//! sampling of the annotation pool.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value_system::{ValueId, ValueVector};

/// Corpus file schema version written alongside corpus files.
pub const CORPUS_SCHEMA_VERSION: u32 = 1;

/// Minimum preliminary score at which a post counts as reflecting a value.
pub const REFLECTS_THRESHOLD: u8 = 4;

/// Maximum comprehensibility score; only posts at the top of the scale pass.
pub const COMPREHENSIBLE: u8 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("post `{0}` has empty text")]
    EmptyText(String),
    #[error("post `{0}`: parent relation and parent text must be given together")]
    ParentMismatch(String),
    #[error("post id is empty")]
    EmptyId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("verdict has no {0} rating")]
    MissingRating(&'static str),
    #[error("{concept} rating {rating} outside [0, 3]")]
    OutOfScale { concept: &'static str, rating: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedSource {
    /// Algorithmically curated "For You" feed.
    Fyp,
    Following,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentRelation {
    Reply,
    Quote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RawPost {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_relation: Option<ParentRelation>,
    source: FeedSource,
    owner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created_at: Option<String>,
}

/// A social-media post with optional reply/quote context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPost", into = "RawPost")]
pub struct Post {
    pub id: String,
    pub text: String,
    pub parent: Option<(ParentRelation, String)>,
    pub source: FeedSource,
    /// Id of the user whose feed the post came from.
    pub owner: String,
    pub created_at: Option<String>,
}

impl TryFrom<RawPost> for Post {
    type Error = CorpusError;

    fn try_from(raw: RawPost) -> Result<Self, Self::Error> {
        let parent = match (raw.parent_relation, raw.parent_text) {
            (Some(rel), Some(text)) => Some((rel, text)),
            (None, None) => None,
            _ => return Err(CorpusError::ParentMismatch(raw.id)),
        };
        Post::new(raw.id, raw.text, parent, raw.source, raw.owner).map(|mut p| {
            p.created_at = raw.created_at;
            p
        })
    }
}

impl From<Post> for RawPost {
    fn from(p: Post) -> Self {
        let (parent_relation, parent_text) = match p.parent {
            Some((r, t)) => (Some(r), Some(t)),
            None => (None, None),
        };
        RawPost {
            id: p.id,
            text: p.text,
            parent_text,
            parent_relation,
            source: p.source,
            owner: p.owner,
            created_at: p.created_at,
        }
    }
}

impl Post {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        parent: Option<(ParentRelation, String)>,
        source: FeedSource,
        owner: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText(id));
        }
        Ok(Post {
            id,
            text,
            parent,
            source,
            owner: owner.into(),
            created_at: None,
        })
    }
}

/// Text shown to raters and models: the post, followed by its parent when
/// it replies to or quotes another post.
pub fn render_context(post: &Post) -> String {
    match &post.parent {
        None => post.text.clone(),
        Some((ParentRelation::Reply, parent)) => format!("{} REPLY TO: {}", post.text, parent),
        Some((ParentRelation::Quote, parent)) => format!("{} QUOTED: {}", post.text, parent),
    }
}

/// Outcome of the comprehensibility and NSFW prompts for one post.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub comprehensibility: Option<u8>,
    pub nsfw: Option<u8>,
    /// Per-concept explanations keyed by concept name.
    #[serde(default)]
    pub rationales: BTreeMap<String, String>,
}

/// Gate thresholds. NSFW ratings above `nsfw_max` fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterConfig {
    pub nsfw_max: u8,
}

fn scaled(concept: &'static str, r: Option<u8>) -> Result<u8, FilterError> {
    let r = r.ok_or(FilterError::MissingRating(concept))?;
    if r > 3 {
        return Err(FilterError::OutOfScale { concept, rating: r });
    }
    Ok(r)
}

/// Passes only posts rated fully comprehensible.
pub fn comprehensibility_gate(verdict: &FilterVerdict) -> Result<bool, FilterError> {
    Ok(scaled("comprehensibility", verdict.comprehensibility)? == COMPREHENSIBLE)
}

pub fn nsfw_gate(verdict: &FilterVerdict, config: FilterConfig) -> Result<bool, FilterError> {
    Ok(scaled("nsfw", verdict.nsfw)? <= config.nsfw_max)
}

impl FilterVerdict {
    pub fn passes(&self, config: FilterConfig) -> Result<bool, FilterError> {
        Ok(comprehensibility_gate(self)? && nsfw_gate(self, config)?)
    }
}

pub fn reflects_value(scores: &ValueVector, v: ValueId) -> bool {
    scores.get(v).get() >= REFLECTS_THRESHOLD
}

/// One selected post and the value that triggered its selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub post_id: String,
    pub user_id: String,
    pub source: FeedSource,
    pub value: ValueId,
}

#[derive(Debug, Clone, Default)]
pub struct SampleOptions {
    /// Per-user sampling weight (default 1.0). A weight w runs floor(w)
    /// passes over the user's values plus one more with probability frac(w).
    pub user_weights: BTreeMap<String, f64>,
}

/// Value-stratified sample of the annotation pool.
///
/// Users are visited in id order, values in canonical order. For each
/// (user, value), candidates are the user's not-yet-taken posts that
/// reflect the value, split by source and sorted by post id. When both
/// sources have candidates one `gen_bool(0.5)` picks FYP on `true`; then
/// one `gen_range` picks a post within the chosen source. Extra passes from
/// `user_weights` run immediately after the user's first pass, each
/// preceded by a `gen_bool(frac)` draw only for the fractional pass.
pub fn stratified_sample(
    posts: &[Post],
    prelim: &BTreeMap<String, ValueVector>,
    seed: u64,
    options: &SampleOptions,
) -> Vec<SampleEntry> {
    let mut by_user: BTreeMap<&str, Vec<&Post>> = BTreeMap::new();
    for p in posts {
        by_user.entry(p.owner.as_str()).or_default().push(p);
    }
    for list in by_user.values_mut() {
        list.sort_by(|a, b| a.id.cmp(&b.id));
        list.dedup_by(|a, b| a.id == b.id);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (user, user_posts) in by_user {
        let weight = options
            .user_weights
            .get(user)
            .copied()
            .unwrap_or(1.0)
            .max(0.0);
        let whole = weight.floor() as usize;
        let frac = weight - weight.floor();
        let mut taken: BTreeSet<&str> = BTreeSet::new();
        let mut passes = whole;
        if frac > 0.0 && rng.random_bool(frac) {
            passes += 1;
        }
        for _ in 0..passes {
            for v in ValueId::ALL {
                let mut fyp = Vec::new();
                let mut following = Vec::new();
                for p in &user_posts {
                    if taken.contains(p.id.as_str()) {
                        continue;
                    }
                    let Some(scores) = prelim.get(&p.id) else {
                        continue;
                    };
                    if !reflects_value(scores, v) {
                        continue;
                    }
                    match p.source {
                        FeedSource::Fyp => fyp.push(*p),
                        FeedSource::Following => following.push(*p),
                    }
                }
                let pool = match (fyp.is_empty(), following.is_empty()) {
                    (true, true) => continue,
                    (false, true) => fyp,
                    (true, false) => following,
                    (false, false) => {
                        if rng.random_bool(0.5) {
                            fyp
                        } else {
                            following
                        }
                    }
                };
                let pick = pool[rng.random_range(0..pool.len())];
                taken.insert(pick.id.as_str());
                out.push(SampleEntry {
                    post_id: pick.id.clone(),
                    user_id: user.to_string(),
                    source: pick.source,
                    value: v,
                });
            }
        }
    }
    out
}

/// Posts named by a sample manifest, deduplicated by id, in manifest order.
pub fn sampled_posts<'a>(posts: &'a [Post], manifest: &[SampleEntry]) -> Vec<&'a Post> {
    let by_id: BTreeMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut seen = BTreeSet::new();
    manifest
        .iter()
        .filter(|e| seen.insert(e.post_id.as_str()))
        .filter_map(|e| by_id.get(e.post_id.as_str()).copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, owner: &str, source: FeedSource) -> Post {
        Post::new(id, format!("text of {id}"), None, source, owner).unwrap()
    }

    fn scores(pairs: &[(ValueId, u8)]) -> ValueVector {
        let mut v = ValueVector::zeros();
        for &(id, r) in pairs {
            v.set(id, crate::LikertRating::new(r).unwrap());
        }
        v
    }

    #[test]
    fn render_plain_reply_quote() {
        let p = Post::new("1", "Hello", None, FeedSource::Fyp, "u").unwrap();
        assert_eq!(render_context(&p), "Hello");
        let p = Post::new(
            "2",
            "I agree",
            Some((ParentRelation::Reply, "Vote today".into())),
            FeedSource::Fyp,
            "u",
        )
        .unwrap();
        assert_eq!(render_context(&p), "I agree REPLY TO: Vote today");
        let p = Post::new(
            "3",
            "lol",
            Some((ParentRelation::Quote, "Breaking news…".into())),
            FeedSource::Following,
            "u",
        )
        .unwrap();
        assert_eq!(render_context(&p), "lol QUOTED: Breaking news…");
    }

    #[test]
    fn post_validation() {
        assert_eq!(
            Post::new("x", "   ", None, FeedSource::Fyp, "u"),
            Err(CorpusError::EmptyText("x".into()))
        );
        let half = r#"{"id":"a","text":"t","parent_text":"p","source":"fyp","owner":"u"}"#;
        assert!(serde_json::from_str::<Post>(half).is_err());
        let ok = r#"{"id":"a","text":"t","parent_text":"p","parent_relation":"quote","source":"fyp","owner":"u"}"#;
        let p: Post = serde_json::from_str(ok).unwrap();
        assert_eq!(p.parent, Some((ParentRelation::Quote, "p".into())));
        assert!(serde_json::from_str::<Post>(
            r#"{"id":"a","text":"t","source":"home","owner":"u"}"#
        )
        .is_err());
    }

    #[test]
    fn comprehensibility_gate_cases() {
        let v = |r| FilterVerdict {
            comprehensibility: Some(r),
            ..Default::default()
        };
        assert_eq!(comprehensibility_gate(&v(3)), Ok(true));
        assert_eq!(comprehensibility_gate(&v(2)), Ok(false));
        assert_eq!(comprehensibility_gate(&v(0)), Ok(false));
        assert_eq!(
            comprehensibility_gate(&FilterVerdict::default()),
            Err(FilterError::MissingRating("comprehensibility"))
        );
        assert!(matches!(
            comprehensibility_gate(&v(4)),
            Err(FilterError::OutOfScale { .. })
        ));
    }

    #[test]
    fn nsfw_gate_cases() {
        let v = |r| FilterVerdict {
            nsfw: Some(r),
            ..Default::default()
        };
        let cfg = FilterConfig::default();
        assert_eq!(nsfw_gate(&v(0), cfg), Ok(true));
        assert_eq!(nsfw_gate(&v(3), cfg), Ok(false));
        assert_eq!(nsfw_gate(&v(1), cfg), Ok(false));
        // threshold table: nsfw_max t passes ratings 0..=t
        for t in 0..=3u8 {
            for r in 0..=3u8 {
                assert_eq!(nsfw_gate(&v(r), FilterConfig { nsfw_max: t }), Ok(r <= t));
            }
        }
        assert_eq!(
            nsfw_gate(&FilterVerdict::default(), cfg),
            Err(FilterError::MissingRating("nsfw"))
        );
    }

    #[test]
    fn reflects_at_four() {
        let s = scores(&[
            (ValueId::Caring, 4),
            (ValueId::Face, 3),
            (ValueId::Tolerance, 6),
        ]);
        assert!(reflects_value(&s, ValueId::Caring));
        assert!(!reflects_value(&s, ValueId::Face));
        assert!(reflects_value(&s, ValueId::Tolerance));
    }

    #[test]
    fn only_following_qualifies() {
        let posts = vec![
            post("a", "u1", FeedSource::Fyp),
            post("b", "u1", FeedSource::Following),
        ];
        let prelim = BTreeMap::from([
            ("a".to_string(), scores(&[])),
            ("b".to_string(), scores(&[(ValueId::Caring, 5)])),
        ]);
        for seed in 0..20 {
            let s = stratified_sample(&posts, &prelim, seed, &SampleOptions::default());
            assert_eq!(s.len(), 1);
            assert_eq!(s[0].post_id, "b");
            assert_eq!(s[0].source, FeedSource::Following);
        }
    }

    #[test]
    fn value_nobody_reflects_is_absent() {
        let posts = vec![post("a", "u1", FeedSource::Fyp)];
        let prelim = BTreeMap::from([("a".to_string(), scores(&[(ValueId::Caring, 5)]))]);
        let s = stratified_sample(&posts, &prelim, 1, &SampleOptions::default());
        assert!(s.iter().all(|e| e.value == ValueId::Caring));
    }

    #[test]
    fn same_seed_same_sample_and_user_disjoint() {
        let mut posts = Vec::new();
        let mut prelim = BTreeMap::new();
        for u in 0..5 {
            for i in 0..12 {
                let id = format!("u{u}-p{i}");
                let src = if i % 2 == 0 {
                    FeedSource::Fyp
                } else {
                    FeedSource::Following
                };
                posts.push(post(&id, &format!("u{u}"), src));
                let v = ValueId::ALL[(i * 3 + u) % 19];
                let w = ValueId::ALL[(i * 7) % 19];
                prelim.insert(id, scores(&[(v, 5), (w, 4)]));
            }
        }
        let a = stratified_sample(&posts, &prelim, 9, &SampleOptions::default());
        let b = stratified_sample(&posts, &prelim, 9, &SampleOptions::default());
        assert_eq!(a, b);
        assert!(a.len() <= 5 * 19);
        let ids: BTreeSet<_> = a.iter().map(|e| &e.post_id).collect();
        assert_eq!(ids.len(), a.len());
        for e in &a {
            assert!(e.post_id.starts_with(&format!("{}-", e.user_id)));
        }
    }

    #[test]
    fn extra_weight_adds_a_pass() {
        let posts: Vec<_> = (0..4)
            .map(|i| post(&format!("p{i}"), "old", FeedSource::Following))
            .collect();
        let prelim: BTreeMap<_, _> = posts
            .iter()
            .map(|p| (p.id.clone(), scores(&[(ValueId::Tradition, 6)])))
            .collect();
        let single = stratified_sample(&posts, &prelim, 3, &SampleOptions::default());
        assert_eq!(single.len(), 1);
        let opts = SampleOptions {
            user_weights: BTreeMap::from([("old".to_string(), 2.0)]),
        };
        let double = stratified_sample(&posts, &prelim, 3, &opts);
        assert_eq!(double.len(), 2);
        assert_ne!(double[0].post_id, double[1].post_id);
    }
}
