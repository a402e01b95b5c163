//! Shared fixtures for unit tests.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::forest::{
    Dataset, FeatureSpec, Instance, Label, RandomForest, Schema, TrainConfig, TreeNode,
};

pub(crate) fn unit_schema(d: usize) -> Schema {
    Schema::new(
        (0..d)
            .map(|i| FeatureSpec::new(format!("x{}", i + 1), 0.0, 1.0))
            .collect(),
    )
    .unwrap()
}

/// Two Gaussian clusters `separation` sigmas apart along the diagonal.
pub(crate) fn gaussian_pair(n_per_class: usize, d: usize, separation: f64, seed: u64) -> Dataset {
    use rand_distr::{Distribution, Normal};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / libm::sqrt(d as f64);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let half = 8.0 + separation;
    let schema = Schema::new(
        (0..d)
            .map(|i| FeatureSpec::new(format!("x{}", i + 1), -half, half))
            .collect(),
    )
    .unwrap();

    let mut instances = Vec::new();
    for class in [Label::Novice, Label::Expert] {
        let center = if class.is_expert() { offset } else { 0.0 };
        for k in 0..n_per_class {
            let features: Vec<f64> = (0..d)
                .map(|_| {
                    let v: f64 = center + normal.sample(&mut rng);
                    v.clamp(-half, half)
                })
                .collect();
            instances.push(Instance {
                features,
                label: class,
                group: (k % 3) as u32,
            });
        }
    }
    Dataset::new(schema, instances).unwrap()
}

/// A small trained forest for geometry and recourse tests.
pub(crate) fn small_forest(n_trees: usize, depth: usize, d: usize, seed: u64) -> RandomForest {
    let dataset = gaussian_pair(60, d, 2.0, seed);
    let config = TrainConfig {
        n_trees,
        max_depth: depth,
        features_per_tree: crate::forest::ceil_sqrt(d),
        bootstrap: true,
        min_leaf_samples: 1,
        seed,
    };
    crate::forest::train_forest(&dataset, &config).unwrap()
}

/// The dataset behind [`small_forest`], for sampling query points.
pub(crate) fn small_forest_with_data(
    n_trees: usize,
    depth: usize,
    d: usize,
    seed: u64,
) -> (RandomForest, Dataset) {
    let dataset = gaussian_pair(60, d, 2.0, seed);
    let config = TrainConfig {
        n_trees,
        max_depth: depth,
        features_per_tree: crate::forest::ceil_sqrt(d),
        bootstrap: true,
        min_leaf_samples: 1,
        seed,
    };
    let forest = crate::forest::train_forest(&dataset, &config).unwrap();
    (forest, dataset)
}

pub(crate) fn leaf(label: Label) -> TreeNode {
    TreeNode::Leaf {
        expert_fraction: if label.is_expert() { 1.0 } else { 0.0 },
        label,
        samples: 1,
    }
}

pub(crate) fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> TreeNode {
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Two hand-built trees over [0,1]^2 with splits x1@{0.3, 0.5} and
/// x2@{0.2, 0.7}; tree 0 holds the expert leaf {x1 > 0.5, x2 <= 0.2},
/// tree 1 the expert leaf {x1 > 0.3, x2 <= 0.7}.
pub(crate) fn two_tree_fixture() -> RandomForest {
    let tree0 = split(
        0,
        0.5,
        leaf(Label::Novice),
        split(1, 0.2, leaf(Label::Expert), leaf(Label::Novice)),
    );
    let tree1 = split(
        1,
        0.7,
        split(0, 0.3, leaf(Label::Novice), leaf(Label::Expert)),
        leaf(Label::Novice),
    );
    let config = TrainConfig::default_for_dim(2);
    RandomForest::from_parts(unit_schema(2), config, vec![tree0, tree1]).unwrap()
}

/// Three trees over [0,1]^2 whose expert leaves overlap along x1:
/// (0.2, 0.6] x [0, 0.3], (0.3, 0.7] x [0, 0.35] and (0.25, 0.5] x
/// [0, 0.4]. Around the query (0.9, 0.2) they prune to one free axis with
/// spans (1,5], (3,6] and (2,4], whose alpha=0.5 representatives pool to
/// the frozen weights {2:1, 3:2, 4:3, 5:2, 6:1}.
pub(crate) fn overlap_fixture() -> RandomForest {
    let band = |lo: f64, hi: f64, cap: f64| {
        split(
            0,
            lo,
            leaf(Label::Novice),
            split(
                0,
                hi,
                split(1, cap, leaf(Label::Expert), leaf(Label::Novice)),
                leaf(Label::Novice),
            ),
        )
    };
    let trees = vec![
        band(0.2, 0.6, 0.3),
        band(0.3, 0.7, 0.35),
        band(0.25, 0.5, 0.4),
    ];
    let config = TrainConfig::default_for_dim(2);
    RandomForest::from_parts(unit_schema(2), config, trees).unwrap()
}
