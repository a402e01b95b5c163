//! Integer view of the forest's feature space.
//!
//! Split thresholds cut every feature axis into partitions; a real vector
//! becomes a lattice point of partition indices and every leaf becomes an
//! axis-aligned integer hyper-rectangle `{l_i < p_i <= r_i}`. Partitions
//! are left-open/right-closed to mirror the `x <= t` split convention, so
//! prediction is constant on each lattice cell and the number of expert
//! rectangles covering a cell equals the forest's expert vote count there.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Label, RandomForest, TreeNode};

/// Sorted distinct split thresholds of one feature plus its domain bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturePartitions {
    pub lower: f64,
    pub upper: f64,
    pub thresholds: Vec<f64>,
}

impl FeaturePartitions {
    /// Number of partitions `m_i` (= thresholds + 1).
    pub fn count(&self) -> u32 {
        self.thresholds.len() as u32 + 1
    }
}

/// Per-feature partition boundaries for a whole forest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionTable {
    features: Vec<FeaturePartitions>,
}

impl PartitionTable {
    /// Collects the distinct split thresholds of every feature across all
    /// trees. Features the forest never splits on get a single partition.
    pub fn from_forest(forest: &RandomForest) -> Self {
        let d = forest.dim();
        let mut per_feature: Vec<Vec<f64>> = vec![Vec::new(); d];
        for tree in forest.trees() {
            collect_thresholds(tree, &mut per_feature);
        }
        let features = per_feature
            .into_iter()
            .enumerate()
            .map(|(i, mut thresholds)| {
                thresholds.sort_unstable_by(f64::total_cmp);
                thresholds.dedup();
                let spec = forest.schema().feature(i);
                FeaturePartitions {
                    lower: spec.lower,
                    upper: spec.upper,
                    thresholds,
                }
            })
            .collect();
        PartitionTable { features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, index: usize) -> &FeaturePartitions {
        &self.features[index]
    }

    /// `m_i` for one feature.
    pub fn partition_count(&self, feature: usize) -> u32 {
        self.features[feature].count()
    }

    /// All `m_1 ..= m_d`.
    pub fn partition_counts(&self) -> Vec<u32> {
        self.features.iter().map(FeaturePartitions::count).collect()
    }

    /// Total partition count over all features, the single-feature
    /// candidate space size.
    pub fn total_partitions(&self) -> u64 {
        self.features.iter().map(|f| f.count() as u64).sum()
    }

    /// Maps a real vector to its partition indices. A value equal to a
    /// threshold belongs to the lower partition; the first partition is
    /// closed below at the domain minimum.
    pub fn discretize(&self, x: &[f64]) -> Result<IntegerPoint> {
        if x.len() != self.dim() {
            return Err(Error::SchemaMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut coords = Vec::with_capacity(x.len());
        for (i, (&v, fp)) in x.iter().zip(&self.features).enumerate() {
            if !(v >= fp.lower && v <= fp.upper) {
                return Err(Error::OutOfDomain { feature: i, value: v });
            }
            let below = fp.thresholds.partition_point(|&t| t < v);
            coords.push(below as u32 + 1);
        }
        Ok(IntegerPoint(coords))
    }

    /// The real interval `(a, b]` of a partition (`[a, b]` for the first).
    pub fn interval(&self, feature: usize, partition: u32) -> Result<(f64, f64)> {
        let fp = self
            .features
            .get(feature)
            .ok_or(Error::PartitionOutOfRange { feature, partition })?;
        let m = fp.count();
        if partition == 0 || partition > m {
            return Err(Error::PartitionOutOfRange { feature, partition });
        }
        let a = if partition == 1 {
            fp.lower
        } else {
            fp.thresholds[partition as usize - 2]
        };
        let b = if partition == m {
            fp.upper
        } else {
            fp.thresholds[partition as usize - 1]
        };
        Ok((a, b))
    }

    /// A representative real value for a partition: its interval midpoint,
    /// with domain bounds closing the outer partitions. The result always
    /// lies inside the partition's cell.
    pub fn undiscretize(&self, feature: usize, partition: u32) -> Result<f64> {
        let (a, b) = self.interval(feature, partition)?;
        let mid = a + (b - a) * 0.5;
        // If the midpoint rounds down onto the open lower edge, fall back
        // to the closed upper edge.
        if partition > 1 && mid <= a {
            Ok(b)
        } else {
            Ok(mid)
        }
    }

    /// Index of the partition boundary created by threshold `t`: points
    /// with `x <= t` have partition index at most this value.
    pub(crate) fn boundary_index(&self, feature: usize, t: f64) -> u32 {
        self.features[feature].thresholds.partition_point(|&v| v <= t) as u32
    }
}

fn collect_thresholds(node: &TreeNode, out: &mut [Vec<f64>]) {
    if let TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    } = node
    {
        out[*feature].push(*threshold);
        collect_thresholds(left, out);
        collect_thresholds(right, out);
    }
}

/// A lattice point of partition indices, `1 <= p_i <= m_i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntegerPoint(pub Vec<u32>);

impl IntegerPoint {
    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Squared Euclidean distance on the lattice.
    pub fn dist_sq(&self, other: &IntegerPoint) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| {
                let d = a.abs_diff(b) as u64;
                d * d
            })
            .sum()
    }

    /// Number of coordinates in which the two points differ.
    pub fn hamming(&self, other: &IntegerPoint) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// An integer hyper-rectangle `{l_i < p_i <= r_i}` with the class label of
/// the leaf it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntRect {
    /// Exclusive lower bounds `l_i`.
    pub lower: Vec<u32>,
    /// Inclusive upper bounds `r_i`.
    pub upper: Vec<u32>,
    pub label: Label,
    /// Which tree's leaf produced this rectangle.
    pub tree_index: usize,
}

impl IntRect {
    pub fn new(lower: Vec<u32>, upper: Vec<u32>, label: Label, tree_index: usize) -> Self {
        debug_assert_eq!(lower.len(), upper.len());
        debug_assert!(lower.iter().zip(&upper).all(|(l, r)| l < r));
        IntRect {
            lower,
            upper,
            label,
            tree_index,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains_dim(&self, dim: usize, v: u32) -> bool {
        self.lower[dim] < v && v <= self.upper[dim]
    }

    pub fn contains(&self, p: &IntegerPoint) -> bool {
        (0..self.dim()).all(|i| self.contains_dim(i, p.0[i]))
    }

    /// Lattice values spanned in one dimension: `r_i - l_i`.
    pub fn span(&self, dim: usize) -> u32 {
        self.upper[dim] - self.lower[dim]
    }

    /// Total number of lattice points.
    pub fn point_count(&self) -> u128 {
        (0..self.dim()).map(|i| self.span(i) as u128).product()
    }
}

/// One rectangle per leaf of the forest, regardless of label. Dimensions
/// the leaf's path never constrains span the full `(0, m_i]` range.
pub fn extract_rects(forest: &RandomForest, table: &PartitionTable) -> Vec<IntRect> {
    let counts = table.partition_counts();
    let mut rects = Vec::new();
    for (tree_index, tree) in forest.trees().iter().enumerate() {
        let mut lower = vec![0u32; counts.len()];
        let mut upper = counts.clone();
        descend(tree, table, tree_index, &mut lower, &mut upper, &mut rects);
    }
    rects
}

/// The expert (label 1) rectangles only.
pub fn extract_expert_rects(forest: &RandomForest, table: &PartitionTable) -> Vec<IntRect> {
    let mut rects = extract_rects(forest, table);
    rects.retain(|r| r.label.is_expert());
    rects
}

fn descend(
    node: &TreeNode,
    table: &PartitionTable,
    tree_index: usize,
    lower: &mut [u32],
    upper: &mut [u32],
    out: &mut Vec<IntRect>,
) {
    match node {
        TreeNode::Leaf { label, .. } => {
            out.push(IntRect::new(
                lower.to_vec(),
                upper.to_vec(),
                *label,
                tree_index,
            ));
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let k = table.boundary_index(*feature, *threshold);
            let saved_upper = upper[*feature];
            upper[*feature] = saved_upper.min(k);
            descend(left, table, tree_index, lower, upper, out);
            upper[*feature] = saved_upper;

            let saved_lower = lower[*feature];
            lower[*feature] = saved_lower.max(k);
            descend(right, table, tree_index, lower, upper, out);
            lower[*feature] = saved_lower;
        }
    }
}

/// All lattice points of a rectangle in lexicographic order, for tests and
/// oracles over small instances.
pub fn enumerate_points(rect: &IntRect, cap: u64) -> Result<Vec<IntegerPoint>> {
    let total = rect.point_count();
    if total > cap as u128 {
        return Err(Error::RectTooLarge {
            points: total,
            cap,
        });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut current: Vec<u32> = rect.lower.iter().map(|&l| l + 1).collect();
    loop {
        out.push(IntegerPoint(current.clone()));
        // odometer increment, last dimension fastest
        let mut dim = rect.dim();
        loop {
            if dim == 0 {
                return Ok(out);
            }
            dim -= 1;
            if current[dim] < rect.upper[dim] {
                current[dim] += 1;
                break;
            }
            current[dim] = rect.lower[dim] + 1;
        }
    }
}
