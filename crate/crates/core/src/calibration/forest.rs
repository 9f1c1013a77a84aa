//! Regression forests: bootstrap samples, variance-reduction splits and
//! per-split feature subsampling.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("empty training set")]
    Empty,
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid forest config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves hit `min_samples_leaf`.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means ceil(p / 3).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            max_depth: None,
            min_samples_leaf: 5,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn features_per_split(&self, p: usize) -> usize {
        self.max_features
            .unwrap_or(p.div_ceil(3))
            .clamp(1, p.max(1))
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::Config("n_trees must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::Config(
                "min_samples_leaf must be positive".into(),
            ));
        }
        if self.max_features == Some(0) {
            return Err(ForestError::Config("max_features must be positive".into()));
        }
        Ok(())
    }
}

/// Flat node arrays; `feature[i] < 0` marks a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let f = self.feature[i];
            if f < 0 {
                return self.value[i];
            }
            i = if x[f as usize] <= self.threshold[i] {
                self.left[i]
            } else {
                self.right[i]
            } as usize;
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.feature.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Impurity decrease per feature, normalized to sum 1 (all zero if no
    /// tree ever split).
    pub importances: Vec<f64>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::FeatureCount {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// True when no tree split, i.e. the model is a constant.
    pub fn is_constant(&self) -> bool {
        self.trees.iter().all(|t| t.n_nodes() == 1)
    }
}

/// Sorted distinct values of each feature, with every cell's bin index.
struct Binned {
    edges: Vec<Vec<f64>>,
    bins: Vec<Vec<u32>>, // feature-major
}

impl Binned {
    fn new(x: &[Vec<f64>], p: usize) -> Self {
        let mut edges = Vec::with_capacity(p);
        let mut bins = Vec::with_capacity(p);
        for j in 0..p {
            let mut e: Vec<f64> = x.iter().map(|r| r[j]).collect();
            e.sort_by(f64::total_cmp);
            e.dedup();
            let b = x
                .iter()
                .map(|r| {
                    e.binary_search_by(|v| v.total_cmp(&r[j]))
                        .expect("value present") as u32
                })
                .collect();
            edges.push(e);
            bins.push(b);
        }
        Binned { edges, bins }
    }
}

struct Split {
    feature: usize,
    bin: u32,
    gain: f64,
}

struct Grower<'a> {
    data: &'a Binned,
    y: &'a [f64],
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
    // scratch, reused across nodes
    cnt: Vec<usize>,
    sum: Vec<f64>,
}

impl Grower<'_> {
    fn best_split(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<Split> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let p = self.data.edges.len();
        let mut best: Option<Split> = None;
        for f in index::sample(rng, p, self.mtry).into_iter() {
            let nb = self.data.edges[f].len();
            if nb < 2 {
                continue;
            }
            self.cnt.clear();
            self.cnt.resize(nb, 0);
            self.sum.clear();
            self.sum.resize(nb, 0.0);
            let col = &self.data.bins[f];
            for &i in idx {
                let b = col[i] as usize;
                self.cnt[b] += 1;
                self.sum[b] += self.y[i];
            }
            let (mut nl, mut sl) = (0usize, 0.0);
            for b in 0..nb - 1 {
                if self.cnt[b] == 0 {
                    continue;
                }
                nl += self.cnt[b];
                sl += self.sum[b];
                let nr = n - nl;
                if nr < self.min_leaf {
                    break;
                }
                if nl < self.min_leaf {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b as u32,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(
        &mut self,
        tree: &mut Tree,
        imp: &mut [f64],
        idx: &mut [usize],
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let node = tree.push_leaf(mean);
        if n < 2 * self.min_leaf || self.max_depth.is_some_and(|d| depth >= d) {
            return node;
        }
        let Some(split) = self.best_split(idx, rng) else {
            return node;
        };
        imp[split.feature] += split.gain;
        let data = self.data;
        let col = &data.bins[split.feature];
        // stable partition keeps the result independent of scratch order
        idx.sort_by_key(|&i| col[i] > split.bin);
        let n_left = idx.iter().take_while(|&&i| col[i] <= split.bin).count();
        let edges = &data.edges[split.feature];
        // midpoint to the next value present in this node
        let next = idx[n_left..]
            .iter()
            .map(|&i| col[i])
            .min()
            .expect("right side non-empty");
        let threshold = 0.5 * (edges[split.bin as usize] + edges[next as usize]);
        let (l, r) = idx.split_at_mut(n_left);
        let li = self.grow(tree, imp, l, depth + 1, rng);
        let ri = self.grow(tree, imp, r, depth + 1, rng);
        tree.feature[node] = split.feature as i32;
        tree.threshold[node] = threshold;
        tree.left[node] = li as u32;
        tree.right[node] = ri as u32;
        node
    }
}

/// Fits a forest. Tree `t` draws from ChaCha8 seeded by `config.seed` on
/// stream `(stream << 32) | t`, so results do not depend on thread count.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    config: &ForestConfig,
    stream: u64,
) -> Result<Forest, ForestError> {
    config.validate()?;
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(ForestError::Empty);
    }
    let p = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(ForestError::FeatureCount {
            expected: p,
            got: r.len(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(ForestError::NonFinite);
    }
    let data = Binned::new(x, p);
    let mtry = config.features_per_split(p);

    let fitted: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream((stream << 32) | t as u64);
            let mut idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            idx.sort_unstable();
            let mut g = Grower {
                data: &data,
                y,
                min_leaf: config.min_samples_leaf,
                max_depth: config.max_depth,
                mtry,
                cnt: Vec::new(),
                sum: Vec::new(),
            };
            let mut tree = Tree {
                feature: Vec::new(),
                threshold: Vec::new(),
                left: Vec::new(),
                right: Vec::new(),
                value: Vec::new(),
            };
            let mut imp = vec![0.0; p];
            g.grow(&mut tree, &mut imp, &mut idx, 0, &mut rng);
            (tree, imp)
        })
        .collect();

    let mut importances = vec![0.0; p];
    for (_, imp) in &fitted {
        importances.iter_mut().zip(imp).for_each(|(a, b)| *a += b);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(Forest {
        n_features: p,
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        importances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ForestConfig {
        ForestConfig {
            n_trees: 40,
            ..ForestConfig::default()
        }
    }

    fn grid(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(0..=6) as f64).collect())
            .collect()
    }

    #[test]
    fn constant_target() {
        let x = grid(100, 4, 1);
        let f = fit_forest(&x, &[2.5; 100], &small(), 0).unwrap();
        assert!(f.is_constant());
        assert_eq!(f.predict(&[9.0, 9.0, 9.0, 9.0]).unwrap(), 2.5);
        assert!(f.importances.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planted_signal_feature() {
        // 44 inputs, one of which is the target, as in the personal models
        let x = grid(2400, 44, 2);
        let y: Vec<f64> = x.iter().map(|r| r[3]).collect();
        let f = fit_forest(&x, &y, &small(), 0).unwrap();
        let top = (0..44)
            .max_by(|&a, &b| f.importances[a].total_cmp(&f.importances[b]))
            .unwrap();
        assert_eq!(top, 3);
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let test = grid(100, 44, 3);
        let mae: f64 = test
            .iter()
            .map(|r| (f.predict(r).unwrap() - r[3]).abs())
            .sum::<f64>()
            / 100.0;
        assert!(mae < 0.25, "{mae}");
    }

    #[test]
    fn deterministic() {
        let x = grid(150, 5, 4);
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let a = fit_forest(&x, &y, &small(), 7).unwrap();
        let b = fit_forest(&x, &y, &small(), 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = fit_forest(&x, &y, &small(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn leaves_respect_min_size() {
        let x = grid(60, 3, 5);
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 - r[2]).collect();
        let cfg = ForestConfig {
            n_trees: 5,
            bootstrap: false,
            max_features: Some(3),
            ..ForestConfig::default()
        };
        let f = fit_forest(&x, &y, &cfg, 0).unwrap();
        for t in &f.trees {
            let mut counts = vec![0usize; t.n_nodes()];
            for r in &x {
                let mut i = 0;
                while t.feature[i] >= 0 {
                    i = if r[t.feature[i] as usize] <= t.threshold[i] {
                        t.left[i]
                    } else {
                        t.right[i]
                    } as usize;
                }
                counts[i] += 1;
            }
            for (i, c) in counts.iter().enumerate() {
                if t.feature[i] < 0 {
                    assert!(*c >= 5);
                }
            }
        }
    }

    #[test]
    fn duplicated_training_set_is_close() {
        let x = grid(1000, 4, 6);
        let y: Vec<f64> = x.iter().map(|r| r[0] + 0.5 * r[1]).collect();
        let x2: Vec<_> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<_> = y.iter().chain(&y).copied().collect();
        let a = fit_forest(&x, &y, &small(), 0).unwrap();
        let b = fit_forest(&x2, &y2, &small(), 0).unwrap();
        let diff: f64 = x
            .iter()
            .map(|r| (a.predict(r).unwrap() - b.predict(r).unwrap()).abs())
            .sum::<f64>()
            / 1000.0;
        assert!(diff < 0.1, "{diff}");
    }

    #[test]
    fn feature_count_checked() {
        let f = fit_forest(&grid(20, 2, 0), &[1.0; 20], &small(), 0).unwrap();
        assert!(matches!(
            f.predict(&[1.0]),
            Err(ForestError::FeatureCount { .. })
        ));
        assert!(fit_forest(&[], &[], &small(), 0).is_err());
    }
}
