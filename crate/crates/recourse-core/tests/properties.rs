//! Randomized invariants of the discretization and feedback pipeline,
//! checked over hand-built forests with arbitrary (but path-consistent)
//! split structure.

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recourse_core::{
    densest_center, enumerate_points, extract_expert_rects, formulate_feedback, iter_iter,
    load_forest, prune_rects, representative_values, representatives_per_dim,
    select_representatives, save_forest, DaConfig, FeatureSpec, IntRect, IntegerPoint, Label,
    PartitionTable, RandomForest, Schema, StarPool, TrainConfig, TreeNode,
};

fn leaf(rng: &mut ChaCha8Rng) -> TreeNode {
    let expert = rng.gen_bool(0.5);
    TreeNode::Leaf {
        label: if expert { Label::Expert } else { Label::Novice },
        expert_fraction: if expert { 1.0 } else { 0.0 },
        samples: 1,
    }
}

/// Random tree whose split thresholds stay strictly inside the bounds
/// accumulated along the path, so every leaf region is non-empty.
fn random_tree(
    rng: &mut ChaCha8Rng,
    d: usize,
    depth_left: usize,
    bounds: &mut Vec<(f64, f64)>,
) -> TreeNode {
    if depth_left == 0 || rng.gen_bool(0.25) {
        return leaf(rng);
    }
    let feature = rng.gen_range(0..d);
    let (lo, hi) = bounds[feature];
    let threshold = lo + (hi - lo) * rng.gen_range(0.15..0.85);
    bounds[feature] = (lo, threshold);
    let left = random_tree(rng, d, depth_left - 1, bounds);
    bounds[feature] = (threshold, hi);
    let right = random_tree(rng, d, depth_left - 1, bounds);
    bounds[feature] = (lo, hi);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn random_forest(seed: u64, d: usize, n_trees: usize, depth: usize) -> RandomForest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::new(
        (0..d)
            .map(|i| FeatureSpec::new(format!("x{}", i + 1), 0.0, 1.0))
            .collect(),
    )
    .unwrap();
    let trees: Vec<TreeNode> = (0..n_trees)
        .map(|_| {
            let mut bounds = vec![(0.0, 1.0); d];
            random_tree(&mut rng, d, depth, &mut bounds)
        })
        .collect();
    let mut config = TrainConfig::default_for_dim(d);
    config.n_trees = n_trees;
    config.max_depth = depth;
    RandomForest::from_parts(schema, config, trees).unwrap()
}

fn random_query(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every emitted action changes at most one coordinate; when the
    /// query lies inside any expert rectangle the action never lowers F;
    /// the exhaustive single-feature search dominates everything.
    #[test]
    fn action_cost_quality_and_dominance(
        seed in 0u64..1 << 48,
        d in 1usize..=4,
        n_trees in 1usize..=10,
        alpha in 0.05f64..=1.0,
        gamma in 0.0f64..=4.0,
    ) {
        let forest = random_forest(seed, d, n_trees, 3);
        let table = PartitionTable::from_forest(&forest);
        let rects = extract_expert_rects(&forest, &table);
        let config = DaConfig { alpha, gamma };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for _ in 0..6 {
            let x = random_query(&mut rng, d);
            let f_before = forest.predict_proba(&x).unwrap();
            if f_before > 0.5 {
                continue;
            }
            let q = table.discretize(&x).unwrap();
            let oracle = iter_iter(&forest, &table, &x).unwrap();
            prop_assert!(oracle.target_point.hamming(&q) <= 1);
            match formulate_feedback(&forest, &table, &rects, &x, &config) {
                Ok(action) => {
                    prop_assert!(action.target_point.hamming(&q) <= 1);
                    prop_assert!(oracle.achieved_f >= action.achieved_f);
                    if forest.expert_votes(&x).unwrap() > 0 {
                        prop_assert!(action.achieved_f >= f_before);
                    }
                }
                Err(recourse_core::Error::NoSolution) => {}
                Err(other) => prop_assert!(false, "unexpected error {other}"),
            }
        }
    }

    /// Dropped rectangles contain no lattice point within Hamming
    /// distance 1 of the query; surviving rectangles contain only such
    /// points and stay inside their source.
    #[test]
    fn pruning_soundness(
        seed in 0u64..1 << 48,
        d in 1usize..=3,
        n_trees in 1usize..=6,
    ) {
        let forest = random_forest(seed, d, n_trees, 3);
        let table = PartitionTable::from_forest(&forest);
        let rects = extract_expert_rects(&forest, &table);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
        let x = random_query(&mut rng, d);
        let q = table.discretize(&x).unwrap();
        let pruned = prune_rects(&rects, &q);

        let mut survivors = 0;
        for rect in &rects {
            let violations = (0..d)
                .filter(|&i| !rect.contains_dim(i, q.0[i]))
                .count();
            if violations >= 2 {
                for p in enumerate_points(rect, 4096).unwrap() {
                    prop_assert!(p.hamming(&q) >= 2);
                }
            } else {
                survivors += 1;
            }
        }
        prop_assert_eq!(pruned.len(), survivors);

        for pr in &pruned {
            let shell = IntRect::new(
                pr.lower.clone(),
                pr.upper.clone(),
                pr.source.label,
                pr.source.tree_index,
            );
            for p in enumerate_points(&shell, 4096).unwrap() {
                prop_assert!(p.hamming(&q) <= 1);
                prop_assert!(pr.source.contains(&p));
            }
        }
    }

    /// Per-dimension counts follow the piecewise rule; values are
    /// distinct, ordered, inside the span, and keep both endpoints.
    #[test]
    fn representative_soundness(
        lower in 0u32..500,
        width in 1u32..300,
        alpha in 0.01f64..=1.0,
    ) {
        let upper = lower + width;
        let n = representatives_per_dim(lower, upper, alpha);
        let expected = if width <= 2 {
            width
        } else {
            (alpha * width as f64).ceil() as u32 + 2
        };
        prop_assert_eq!(n, expected);

        let vals = representative_values(lower, upper, alpha);
        prop_assert!(!vals.is_empty());
        prop_assert!(vals.len() as u32 <= n);
        prop_assert!(vals.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(vals.iter().all(|&v| v > lower && v <= upper));
        prop_assert_eq!(vals[0], lower + 1);
        prop_assert_eq!(*vals.last().unwrap(), upper);
    }

    /// The returned center is a candidate and its neighbour count matches
    /// the maximum of an independent quadratic recount.
    #[test]
    fn densest_center_is_optimal(
        coords in prop::collection::vec((0u32..12, 0u32..12), 1..60),
        gamma in 0.0f64..5.0,
    ) {
        let points: Vec<IntegerPoint> = coords
            .iter()
            .map(|&(a, b)| IntegerPoint(vec![a, b]))
            .collect();
        let center = densest_center(&points, gamma).unwrap();
        prop_assert!(points.contains(&center));

        let occ = |p: &IntegerPoint| -> usize {
            points
                .iter()
                .filter(|p2| {
                    let d2 = p.dist_sq(p2) as f64;
                    d2.sqrt() <= gamma
                })
                .count()
                - 1
        };
        let best = points.iter().map(&occ).max().unwrap();
        prop_assert_eq!(occ(&center), best);
    }

    /// The star-pool search returns exactly the same center as the
    /// generic search over the materialized representative multiset.
    #[test]
    fn star_pool_equals_generic_search(
        seed in 0u64..1 << 48,
        d in 1usize..=4,
        n_trees in 1usize..=8,
        alpha in 0.05f64..=1.0,
        gamma in 0.0f64..=5.0,
    ) {
        let forest = random_forest(seed, d, n_trees, 3);
        let table = PartitionTable::from_forest(&forest);
        let rects = extract_expert_rects(&forest, &table);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33cc);
        let x = random_query(&mut rng, d);
        let q = table.discretize(&x).unwrap();
        let pruned = prune_rects(&rects, &q);

        let mut pool_points: Vec<IntegerPoint> = Vec::new();
        for pr in &pruned {
            pool_points.extend(select_representatives(pr, alpha));
        }
        let star = StarPool::build(&q, &pruned, alpha, &table);
        prop_assert_eq!(star.total_weight() as usize, pool_points.len());

        // The fused constructor must agree with prune-then-build exactly.
        let fused = StarPool::from_rects(&q, &rects, alpha, &table);
        prop_assert_eq!(fused.q_weight(), star.q_weight());
        prop_assert_eq!(fused.weighted_points(), star.weighted_points());

        let mut expanded: Vec<IntegerPoint> = Vec::new();
        for (p, w) in star.weighted_points() {
            for _ in 0..w {
                expanded.push(p.clone());
            }
        }
        let mut sorted_pool = pool_points.clone();
        sorted_pool.sort();
        prop_assert_eq!(&expanded, &sorted_pool);

        match (star.densest_center(gamma), densest_center(&pool_points, gamma)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => prop_assert!(pool_points.is_empty()),
            (a, b) => prop_assert!(false, "diverged: {a:?} vs {b:?}"),
        }
    }

    /// Prediction is constant on lattice cells, and the number of expert
    /// rectangles covering a cell equals the forest's expert vote count.
    #[test]
    fn cell_constancy_and_duality(
        seed in 0u64..1 << 48,
        d in 1usize..=3,
        n_trees in 1usize..=8,
    ) {
        let forest = random_forest(seed, d, n_trees, 3);
        let table = PartitionTable::from_forest(&forest);
        let rects = extract_expert_rects(&forest, &table);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0f0f);
        for _ in 0..8 {
            let cell: Vec<u32> = (0..d)
                .map(|i| rng.gen_range(1..=table.partition_count(i)))
                .collect();
            let point = IntegerPoint(cell.clone());
            let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                cell.iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        let (a, b) = table.interval(i, p).unwrap();
                        let v = a + (b - a) * rng.gen_range(0.4..1.0);
                        if v > a { v } else { b }
                    })
                    .collect()
            };
            let x1 = sample(&mut rng);
            let x2 = sample(&mut rng);
            prop_assert_eq!(table.discretize(&x1).unwrap(), point.clone());
            prop_assert_eq!(table.discretize(&x2).unwrap(), point.clone());
            let f1 = forest.predict_proba(&x1).unwrap();
            prop_assert_eq!(f1, forest.predict_proba(&x2).unwrap());
            let covering = rects.iter().filter(|r| r.contains(&point)).count();
            prop_assert_eq!(covering as f64 / n_trees as f64, f1);
        }
    }

    /// Discretize is monotone per coordinate and inverts undiscretize.
    #[test]
    fn discretization_roundtrip_and_monotonicity(
        seed in 0u64..1 << 48,
        d in 1usize..=3,
        n_trees in 1usize..=6,
    ) {
        let forest = random_forest(seed, d, n_trees, 3);
        let table = PartitionTable::from_forest(&forest);
        for feature in 0..d {
            let mut base: Vec<f64> = (0..d)
                .map(|i| table.undiscretize(i, 1).unwrap())
                .collect();
            let mut prev = 0u32;
            for partition in 1..=table.partition_count(feature) {
                base[feature] = table.undiscretize(feature, partition).unwrap();
                let p = table.discretize(&base).unwrap();
                prop_assert_eq!(p.0[feature], partition);
                prop_assert!(partition > prev);
                prev = partition;
            }
        }
    }

    /// Serialized forests round-trip to identical bytes and predictions.
    #[test]
    fn forest_serialization_roundtrip(
        seed in 0u64..1 << 48,
        d in 1usize..=3,
        n_trees in 1usize..=5,
    ) {
        let forest = random_forest(seed, d, n_trees, 3);
        let bytes = save_forest(&forest);
        let loaded = load_forest(&bytes).unwrap();
        prop_assert_eq!(&loaded, &forest);
        prop_assert_eq!(save_forest(&loaded), bytes);
    }
}
