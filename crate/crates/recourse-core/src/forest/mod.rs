//! Random forest model: schema, dataset, tree structure, prediction, and
//! the JSON document format.
//!
//! The forest predicts a binary skill class per instance. `F(x)` is the
//! fraction of trees whose leaf carries the expert label, so `F(x) * T`
//! is always an integer vote count.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod train;

pub use train::train_forest;

/// Binary skill class. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Novice,
    Expert,
}

impl Label {
    pub fn is_expert(self) -> bool {
        matches!(self, Label::Expert)
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Novice => 0,
            Label::Expert => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> core::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Novice),
            1 => Ok(Label::Expert),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// One numeric feature with its inclusive domain bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        FeatureSpec {
            name: name.into(),
            lower,
            upper,
        }
    }
}

/// Ordered feature list shared by datasets, forests, and partition tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    features: Vec<FeatureSpec>,
}

impl Schema {
    /// Validates bounds and name uniqueness.
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidSchema("no features".to_string()));
        }
        for (i, spec) in features.iter().enumerate() {
            if spec.lower >= spec.upper || spec.lower.is_nan() || spec.upper.is_nan() {
                return Err(Error::InvalidSchema(format!(
                    "feature `{}` has bounds [{}, {}]",
                    spec.name, spec.lower, spec.upper
                )));
            }
            if features[..i].iter().any(|other| other.name == spec.name) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate feature name `{}`",
                    spec.name
                )));
            }
        }
        Ok(Schema { features })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    /// Checks that `x` has the right arity and every value is inside its
    /// feature's domain.
    pub fn check_instance(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        for (i, (&v, spec)) in x.iter().zip(&self.features).enumerate() {
            if !(v >= spec.lower && v <= spec.upper) {
                return Err(Error::OutOfDomain { feature: i, value: v });
            }
        }
        Ok(())
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::SchemaMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// A labelled feature vector. `group` identifies who produced it, used by
/// leave-one-group-out cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Label,
    pub group: u32,
}

/// A schema plus conforming instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(schema: Schema, instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidSchema("dataset has no instances".to_string()));
        }
        for inst in &instances {
            schema.check_instance(&inst.features)?;
        }
        Ok(Dataset { schema, instances })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }
}

/// Training hyper-parameters, kept with the forest for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Size of the random feature subset drawn per tree.
    pub features_per_tree: usize,
    /// Sample `n` instances with replacement per tree when set.
    pub bootstrap: bool,
    pub min_leaf_samples: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Conventional defaults for a `d`-dimensional schema: 100 trees of
    /// depth 5, bootstrap on, `ceil(sqrt(d))` features per tree.
    pub fn default_for_dim(d: usize) -> Self {
        TrainConfig {
            n_trees: 100,
            max_depth: 5,
            features_per_tree: ceil_sqrt(d),
            bootstrap: true,
            min_leaf_samples: 1,
            seed: 0,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be >= 1".to_string()));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".to_string()));
        }
        if self.features_per_tree == 0 || self.features_per_tree > d {
            return Err(Error::InvalidConfig(format!(
                "features_per_tree must be in [1, {d}], got {}",
                self.features_per_tree
            )));
        }
        if self.min_leaf_samples == 0 {
            return Err(Error::InvalidConfig(
                "min_leaf_samples must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn ceil_sqrt(d: usize) -> usize {
    let mut k = 1usize;
    while k * k < d {
        k += 1;
    }
    k
}

/// A decision tree node. Instances with `x[feature] <= threshold` descend
/// left, the rest right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: Box<TreeNode>,
        #[serde(rename = "r")]
        right: Box<TreeNode>,
    },
    Leaf {
        label: Label,
        #[serde(rename = "frac")]
        expert_fraction: f64,
        #[serde(rename = "count")]
        samples: usize,
    },
}

impl TreeNode {
    /// Walks to the leaf covering `x` and returns its label.
    pub fn vote(&self, x: &[f64]) -> Label {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
                TreeNode::Leaf { label, .. } => return *label,
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// An ensemble of decision trees over a fixed schema.
///
/// Immutable once trained; prediction is read-only and safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    schema: Schema,
    config: TrainConfig,
    trees: Vec<TreeNode>,
}

impl RandomForest {
    /// Assembles a forest from parts, checking structural invariants.
    pub fn from_parts(schema: Schema, config: TrainConfig, trees: Vec<TreeNode>) -> Result<Self> {
        let forest = RandomForest {
            schema,
            config,
            trees,
        };
        forest.validate()?;
        Ok(forest)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    /// Number of trees voting expert on `x`.
    pub fn expert_votes(&self, x: &[f64]) -> Result<usize> {
        self.schema.check_dim(x)?;
        Ok(self
            .trees
            .iter()
            .filter(|t| t.vote(x).is_expert())
            .count())
    }

    /// `F(x)`: fraction of trees voting expert, in `[0, 1]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(self.expert_votes(x)? as f64 / self.trees.len() as f64)
    }

    /// Hard classification: expert iff `F(x) > 0.5`.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.predict_proba(x)? > 0.5 {
            Label::Expert
        } else {
            Label::Novice
        })
    }

    /// Fraction of dataset instances classified correctly.
    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        let mut correct = 0usize;
        for inst in dataset.instances() {
            if self.predict(&inst.features)? == inst.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::MalformedForest("trees: empty forest".to_string()));
        }
        for (i, tree) in self.trees.iter().enumerate() {
            validate_node(tree, &self.schema, &mut format!("trees[{i}]"))?;
        }
        Ok(())
    }
}

fn validate_node(node: &TreeNode, schema: &Schema, path: &mut String) -> Result<()> {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if *feature >= schema.dim() {
                return Err(Error::MalformedForest(format!(
                    "{path}.split.f: feature index {feature} out of range (d = {})",
                    schema.dim()
                )));
            }
            let spec = schema.feature(*feature);
            if !(*threshold > spec.lower && *threshold < spec.upper) {
                return Err(Error::MalformedForest(format!(
                    "{path}.split.t: threshold {threshold} not strictly inside [{}, {}]",
                    spec.lower, spec.upper
                )));
            }
            let len = path.len();
            path.push_str(".split.l");
            validate_node(left, schema, path)?;
            path.truncate(len);
            path.push_str(".split.r");
            validate_node(right, schema, path)?;
            path.truncate(len);
            Ok(())
        }
        TreeNode::Leaf {
            label,
            expert_fraction,
            ..
        } => {
            if !(0.0..=1.0).contains(expert_fraction) {
                return Err(Error::MalformedForest(format!(
                    "{path}.leaf.frac: {expert_fraction} outside [0, 1]"
                )));
            }
            let expect = *expert_fraction > 0.5;
            if label.is_expert() != expect {
                return Err(Error::MalformedForest(format!(
                    "{path}.leaf.label: label {} inconsistent with frac {expert_fraction}",
                    u8::from(*label)
                )));
            }
            Ok(())
        }
    }
}

/// Serializes a forest to the JSON document
/// `{"schema": [...], "config": {...}, "trees": [...]}`.
pub fn save_forest(forest: &RandomForest) -> Vec<u8> {
    serde_json::to_vec(forest).expect("forest serialization cannot fail")
}

/// Parses and validates a forest document produced by [`save_forest`].
///
/// Syntax errors report line/column; structural violations report the
/// offending node path. Nothing is returned on failure.
pub fn load_forest(bytes: &[u8]) -> Result<RandomForest> {
    let forest: RandomForest =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedForest(e.to_string()))?;
    forest.validate()?;
    Ok(forest)
}
