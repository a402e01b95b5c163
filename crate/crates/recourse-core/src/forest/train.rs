//! CART training for the forest: Gini impurity with exhaustive threshold
//! search at midpoints between consecutive sorted values.
//!
//! Each tree draws its own bootstrap sample and feature subset from a
//! ChaCha stream keyed by the tree index, so training is deterministic
//! for a fixed seed regardless of build order.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Label, RandomForest, TrainConfig, TreeNode};
use crate::error::{Error, Result};

/// Trains `config.n_trees` trees of depth at most `config.max_depth`,
/// each restricted to its own sampled feature subset.
pub fn train_forest(dataset: &Dataset, config: &TrainConfig) -> Result<RandomForest> {
    config.validate(dataset.dim())?;
    let experts = dataset
        .instances()
        .iter()
        .filter(|inst| inst.label.is_expert())
        .count();
    if experts == 0 || experts == dataset.len() {
        return Err(Error::DegenerateTrainingSet);
    }

    let trees: Vec<TreeNode> = (0..config.n_trees)
        .map(|t| build_tree(dataset, config, t as u64))
        .collect();
    RandomForest::from_parts(dataset.schema().clone(), config.clone(), trees)
}

fn build_tree(dataset: &Dataset, config: &TrainConfig, tree_index: u64) -> TreeNode {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(tree_index);

    let n = dataset.len();
    let indices: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };

    let mut features =
        rand::seq::index::sample(&mut rng, dataset.dim(), config.features_per_tree).into_vec();
    features.sort_unstable();

    grow(dataset, indices, &features, 0, config)
}

fn grow(
    dataset: &Dataset,
    indices: Vec<usize>,
    features: &[usize],
    depth: usize,
    config: &TrainConfig,
) -> TreeNode {
    let n = indices.len();
    let experts = count_experts(dataset, &indices);

    if depth >= config.max_depth || experts == 0 || experts == n {
        return leaf(experts, n);
    }
    let Some((feature, threshold)) =
        best_split(dataset, &indices, features, config.min_leaf_samples)
    else {
        return leaf(experts, n);
    };

    let (left, right): (Vec<usize>, Vec<usize>) = indices
        .into_iter()
        .partition(|&i| dataset.instances()[i].features[feature] <= threshold);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(grow(dataset, left, features, depth + 1, config)),
        right: Box::new(grow(dataset, right, features, depth + 1, config)),
    }
}

fn count_experts(dataset: &Dataset, indices: &[usize]) -> usize {
    indices
        .iter()
        .filter(|&&i| dataset.instances()[i].label.is_expert())
        .count()
}

fn leaf(experts: usize, n: usize) -> TreeNode {
    let expert_fraction = experts as f64 / n as f64;
    TreeNode::Leaf {
        // Ties (fraction exactly 0.5) stay novice.
        label: if expert_fraction > 0.5 {
            Label::Expert
        } else {
            Label::Novice
        },
        expert_fraction,
        samples: n,
    }
}

/// Scans every feature in ascending index order and every boundary between
/// distinct sorted values in ascending threshold order; strict improvement
/// keeps the first best, which breaks impurity ties toward the lowest
/// feature index and lowest threshold.
fn best_split(
    dataset: &Dataset,
    indices: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = indices.len();
    let total_experts = count_experts(dataset, indices);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);

    for &f in features {
        let spec = dataset.schema().feature(f);
        column.clear();
        column.extend(indices.iter().map(|&i| {
            let inst = &dataset.instances()[i];
            (inst.features[f], inst.label.is_expert())
        }));
        column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_n = 0usize;
        let mut left_e = 0usize;
        for i in 0..n - 1 {
            left_n += 1;
            if column[i].1 {
                left_e += 1;
            }
            let (a, b) = (column[i].0, column[i + 1].0);
            if a == b {
                continue;
            }
            let right_n = n - left_n;
            let right_e = total_experts - left_e;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let threshold = a + (b - a) * 0.5;
            // Keep thresholds separating and strictly inside the domain.
            if !(threshold < b && threshold > spec.lower) {
                continue;
            }
            let impurity = gini(left_n, left_e) * left_n as f64
                + gini(right_n, right_e) * right_n as f64;
            if best.is_none_or(|(g, _, _)| impurity < g) {
                best = Some((impurity, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn gini(n: usize, experts: usize) -> f64 {
    let p = experts as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{save_forest, FeatureSpec, Instance, Schema};
    use crate::testutil::gaussian_pair;
    use alloc::vec;

    fn two_point_dataset() -> Dataset {
        let schema = Schema::new(vec![FeatureSpec::new("x1", 0.0, 1.0)]).unwrap();
        Dataset::new(
            schema,
            vec![
                Instance {
                    features: vec![0.1],
                    label: Label::Novice,
                    group: 0,
                },
                Instance {
                    features: vec![0.9],
                    label: Label::Expert,
                    group: 1,
                },
            ],
        )
        .unwrap()
    }

    fn single_tree_config() -> TrainConfig {
        TrainConfig {
            n_trees: 1,
            max_depth: 1,
            features_per_tree: 1,
            bootstrap: false,
            min_leaf_samples: 1,
            seed: 3,
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let schema = Schema::new(vec![FeatureSpec::new("x1", 0.0, 1.0)]).unwrap();
        let dataset = Dataset::new(
            schema,
            vec![
                Instance {
                    features: vec![0.2],
                    label: Label::Expert,
                    group: 0,
                },
                Instance {
                    features: vec![0.8],
                    label: Label::Expert,
                    group: 0,
                },
            ],
        )
        .unwrap();
        assert_eq!(
            train_forest(&dataset, &single_tree_config()),
            Err(Error::DegenerateTrainingSet)
        );
    }

    #[test]
    fn separable_pair_yields_correct_stump() {
        let dataset = two_point_dataset();
        let forest = train_forest(&dataset, &single_tree_config()).unwrap();
        match &forest.trees()[0] {
            TreeNode::Split { threshold, .. } => {
                assert!(*threshold > 0.1 && *threshold < 0.9);
            }
            other => panic!("expected a stump, got {other:?}"),
        }
        assert_eq!(forest.predict(&[0.1]).unwrap(), Label::Novice);
        assert_eq!(forest.predict(&[0.9]).unwrap(), Label::Expert);
    }

    #[test]
    fn training_is_deterministic() {
        let dataset = gaussian_pair(200, 2, 4.0, 11);
        let mut config = TrainConfig::default_for_dim(2);
        config.n_trees = 20;
        config.seed = 42;
        let a = train_forest(&dataset, &config).unwrap();
        let b = train_forest(&dataset, &config).unwrap();
        assert_eq!(save_forest(&a), save_forest(&b));
    }

    #[test]
    fn depth_bound_holds() {
        let dataset = gaussian_pair(300, 3, 1.0, 7);
        let mut config = TrainConfig::default_for_dim(3);
        config.n_trees = 10;
        config.max_depth = 4;
        let forest = train_forest(&dataset, &config).unwrap();
        for tree in forest.trees() {
            assert!(tree.depth() <= 4);
        }
    }

    #[test]
    fn trees_split_only_on_their_subset() {
        let dataset = gaussian_pair(200, 4, 3.0, 5);
        let mut config = TrainConfig::default_for_dim(4);
        config.n_trees = 12;
        config.features_per_tree = 1;
        let forest = train_forest(&dataset, &config).unwrap();
        for tree in forest.trees() {
            let mut used = vec![];
            collect_split_features(tree, &mut used);
            used.sort_unstable();
            used.dedup();
            assert!(used.len() <= 1, "tree used features {used:?}");
        }
    }

    #[test]
    fn well_separated_classes_train_accurately() {
        let dataset = gaussian_pair(400, 3, 4.0, 19);
        let config = TrainConfig {
            seed: 2,
            ..TrainConfig::default_for_dim(3)
        };
        let forest = train_forest(&dataset, &config).unwrap();
        assert_eq!(forest.n_trees(), 100);
        let acc = forest.accuracy(&dataset).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    fn collect_split_features(node: &TreeNode, out: &mut Vec<usize>) {
        if let TreeNode::Split {
            feature,
            left,
            right,
            ..
        } = node
        {
            out.push(*feature);
            collect_split_features(left, out);
            collect_split_features(right, out);
        }
    }
}
