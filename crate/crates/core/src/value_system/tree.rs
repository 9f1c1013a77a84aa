use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LikertRating, ValueId, ValueVector, NUM_VALUES};

/// Shipped default layout.
pub const DEFAULT_TREE_TOML: &str = include_str!("../../config/value_tree.v1.toml");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("unknown tree node {0}")]
    UnknownNode(String),
    #[error("invalid tree config: {0}")]
    Config(String),
    #[error("missing rating for high-level node `{0}`")]
    IncompleteElicitation(String),
    #[error("branch threshold {0} must be in [1, 6]")]
    Threshold(u8),
}

/// A node of the loaded tree. Group and high-level nodes are referenced by
/// position in the loaded config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeNode {
    Root,
    Group(usize),
    High(usize),
    Leaf(ValueId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TreeFile {
    version: u32,
    root: String,
    groups: Vec<GroupEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct GroupEntry {
    id: String,
    name: String,
    nodes: Vec<HighEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct HighEntry {
    id: String,
    name: String,
    leaves: Vec<ValueId>,
}

/// Root, two outcome groups, four high-level values, nineteen leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueTree {
    file: TreeFile,
    /// (group index, id, name, leaves sorted canonically)
    highs: Vec<(usize, String, String, Vec<ValueId>)>,
    parent_of: [usize; NUM_VALUES],
}

impl Default for ValueTree {
    fn default() -> Self {
        ValueTree::from_toml(DEFAULT_TREE_TOML).expect("shipped value tree is valid")
    }
}

impl ValueTree {
    pub fn from_toml(text: &str) -> Result<Self, TreeError> {
        let file: TreeFile = toml::from_str(text).map_err(|e| TreeError::Config(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("tree serializes")
    }

    fn from_file(file: TreeFile) -> Result<Self, TreeError> {
        if file.version != 1 {
            return Err(TreeError::Config(format!(
                "unsupported version {}",
                file.version
            )));
        }
        if file.groups.len() != 2 {
            return Err(TreeError::Config(format!(
                "expected 2 highest-level groups, found {}",
                file.groups.len()
            )));
        }
        let mut highs = Vec::new();
        let mut parent_of = [usize::MAX; NUM_VALUES];
        let mut ids = BTreeSet::new();
        for (gi, g) in file.groups.iter().enumerate() {
            if !ids.insert(g.id.clone()) {
                return Err(TreeError::Config(format!("duplicate node id `{}`", g.id)));
            }
            if g.nodes.is_empty() {
                return Err(TreeError::Config(format!(
                    "group `{}` has no high-level nodes",
                    g.id
                )));
            }
            for h in &g.nodes {
                if !ids.insert(h.id.clone()) {
                    return Err(TreeError::Config(format!("duplicate node id `{}`", h.id)));
                }
                if h.leaves.is_empty() {
                    return Err(TreeError::Config(format!("node `{}` has no leaves", h.id)));
                }
                let hi = highs.len();
                for &leaf in &h.leaves {
                    if parent_of[leaf.index()] != usize::MAX {
                        return Err(TreeError::Config(format!(
                            "`{leaf}` assigned to two parents"
                        )));
                    }
                    parent_of[leaf.index()] = hi;
                }
                let mut leaves = h.leaves.clone();
                leaves.sort();
                highs.push((gi, h.id.clone(), h.name.clone(), leaves));
            }
        }
        if highs.len() != 4 {
            return Err(TreeError::Config(format!(
                "expected 4 high-level nodes, found {}",
                highs.len()
            )));
        }
        if let Some(orphan) = ValueId::ALL
            .iter()
            .find(|v| parent_of[v.index()] == usize::MAX)
        {
            return Err(TreeError::Config(format!("`{orphan}` has no parent")));
        }
        Ok(ValueTree {
            file,
            highs,
            parent_of,
        })
    }

    pub fn root_name(&self) -> &str {
        &self.file.root
    }

    pub fn name(&self, node: TreeNode) -> Result<&str, TreeError> {
        self.check(node)?;
        Ok(match node {
            TreeNode::Root => &self.file.root,
            TreeNode::Group(g) => &self.file.groups[g].name,
            TreeNode::High(h) => &self.highs[h].2,
            TreeNode::Leaf(v) => v.display_name(),
        })
    }

    /// Config identifier of a group or high-level node.
    pub fn id(&self, node: TreeNode) -> Result<&str, TreeError> {
        self.check(node)?;
        Ok(match node {
            TreeNode::Root => "root",
            TreeNode::Group(g) => &self.file.groups[g].id,
            TreeNode::High(h) => &self.highs[h].1,
            TreeNode::Leaf(v) => v.key(),
        })
    }

    /// High-level nodes in config order.
    pub fn high_nodes(&self) -> impl Iterator<Item = TreeNode> + '_ {
        (0..self.highs.len()).map(TreeNode::High)
    }

    pub fn high_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.highs.iter().map(|h| h.1.as_str())
    }

    pub fn find_high(&self, id: &str) -> Option<TreeNode> {
        self.highs
            .iter()
            .position(|h| h.1 == id)
            .map(TreeNode::High)
    }

    pub fn leaves(&self, high_id: &str) -> Result<&[ValueId], TreeError> {
        let h = self
            .highs
            .iter()
            .find(|h| h.1 == high_id)
            .ok_or_else(|| TreeError::UnknownNode(high_id.to_string()))?;
        Ok(&h.3)
    }

    /// Id of the high-level node a leaf sits under.
    pub fn parent_id(&self, leaf: ValueId) -> &str {
        &self.highs[self.parent_of[leaf.index()]].1
    }

    fn check(&self, node: TreeNode) -> Result<(), TreeError> {
        let ok = match node {
            TreeNode::Root | TreeNode::Leaf(_) => true,
            TreeNode::Group(g) => g < self.file.groups.len(),
            TreeNode::High(h) => h < self.highs.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(TreeError::UnknownNode(format!("{node:?}")))
        }
    }

    /// Direct children in canonical order; leaves have none.
    pub fn children(&self, node: TreeNode) -> Result<Vec<TreeNode>, TreeError> {
        self.check(node)?;
        Ok(match node {
            TreeNode::Root => (0..self.file.groups.len()).map(TreeNode::Group).collect(),
            TreeNode::Group(g) => self
                .highs
                .iter()
                .enumerate()
                .filter(|(_, h)| h.0 == g)
                .map(|(i, _)| TreeNode::High(i))
                .collect(),
            TreeNode::High(h) => self.highs[h]
                .3
                .iter()
                .copied()
                .map(TreeNode::Leaf)
                .collect(),
            TreeNode::Leaf(_) => Vec::new(),
        })
    }

    /// Leaves to elicit given the high-level ratings: every leaf under a
    /// parent rated at or above `threshold`.
    pub fn expand_branches(
        &self,
        parent_ratings: &BTreeMap<String, LikertRating>,
        threshold: LikertRating,
    ) -> Result<BTreeSet<ValueId>, TreeError> {
        if threshold.get() == 0 {
            return Err(TreeError::Threshold(0));
        }
        let mut out = BTreeSet::new();
        for (_, id, _, leaves) in &self.highs {
            let rating = parent_ratings
                .get(id)
                .ok_or_else(|| TreeError::IncompleteElicitation(id.clone()))?;
            if *rating >= threshold {
                out.extend(leaves.iter().copied());
            }
        }
        Ok(out)
    }
}

/// Fills unelicited values with 0.
pub fn complete_vector(elicited: &BTreeMap<ValueId, LikertRating>) -> ValueVector {
    let mut v = ValueVector::zeros();
    for (&id, &r) in elicited {
        v.set(id, r);
    }
    v
}
