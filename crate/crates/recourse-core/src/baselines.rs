//! Reference feedback methods for benchmarking: two randomized pickers
//! and the exhaustive single-feature search that serves as the oracle.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::RandomForest;
use crate::geometry::{IntegerPoint, PartitionTable};
use crate::recourse::{Direction, FeedbackAction};

/// The feedback formulation methods under comparison.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    RandRand,
    RandIter,
    IterIter,
    Da,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [
        MethodId::RandRand,
        MethodId::RandIter,
        MethodId::IterIter,
        MethodId::Da,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::RandRand => "rand_rand",
            MethodId::RandIter => "rand_iter",
            MethodId::IterIter => "iter_iter",
            MethodId::Da => "da",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut norm = String::with_capacity(s.len());
        for c in s.chars() {
            norm.push(if c == '-' { '_' } else { c.to_ascii_lowercase() });
        }
        match norm.as_str() {
            "da" => Ok(MethodId::Da),
            "rand_rand" => Ok(MethodId::RandRand),
            "rand_iter" => Ok(MethodId::RandIter),
            "iter_iter" => Ok(MethodId::IterIter),
            _ => Err(Error::InvalidConfig(norm + " is not a known method")),
        }
    }
}

/// Builds the action for moving `feature` to `partition`; the current
/// partition yields a no-change action.
fn action_for(
    forest: &RandomForest,
    table: &PartitionTable,
    x: &[f64],
    q: &IntegerPoint,
    f_before: f64,
    feature: usize,
    partition: u32,
) -> Result<FeedbackAction> {
    if partition == q.0[feature] {
        return Ok(FeedbackAction::no_change(q.clone(), f_before));
    }
    let target = table.undiscretize(feature, partition)?;
    let mut x_after = x.to_vec();
    x_after[feature] = target;
    let achieved_f = forest.predict_proba(&x_after)?;
    let mut point = q.clone();
    point.0[feature] = partition;
    let direction = if target > x[feature] {
        Direction::Increase
    } else {
        Direction::Decrease
    };
    Ok(FeedbackAction {
        feature: Some(feature),
        feature_name: Some(forest.schema().feature(feature).name.clone()),
        direction,
        target_value: Some(target),
        target_point: point,
        f_before,
        achieved_f,
        micros: None,
    })
}

/// Uniformly random feature, uniformly random partition of it (possibly
/// the current one).
pub fn rand_rand(
    forest: &RandomForest,
    table: &PartitionTable,
    x: &[f64],
    seed: u64,
) -> Result<FeedbackAction> {
    let f_before = forest.predict_proba(x)?;
    let q = table.discretize(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feature = rng.gen_range(0..table.dim());
    let partition = rng.gen_range(1..=table.partition_count(feature));
    action_for(forest, table, x, &q, f_before, feature, partition)
}

/// Uniformly random feature, then the best partition of that feature by
/// resulting F; ties go to the lowest partition index.
pub fn rand_iter(
    forest: &RandomForest,
    table: &PartitionTable,
    x: &[f64],
    seed: u64,
) -> Result<FeedbackAction> {
    let f_before = forest.predict_proba(x)?;
    let q = table.discretize(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feature = rng.gen_range(0..table.dim());
    let (partition, _) = best_partition(forest, table, x, &q, f_before, feature)?;
    action_for(forest, table, x, &q, f_before, feature, partition)
}

/// Exhaustive search over every (feature, partition) single change,
/// including each feature's current partition. Ties go to the lowest
/// feature index, then the lowest partition. This is the exact optimum of
/// the single-feature action space and the oracle for all other methods.
pub fn iter_iter(
    forest: &RandomForest,
    table: &PartitionTable,
    x: &[f64],
) -> Result<FeedbackAction> {
    let f_before = forest.predict_proba(x)?;
    let q = table.discretize(x)?;
    let mut best: Option<(usize, u32, f64)> = None;
    for feature in 0..table.dim() {
        let (partition, f) = best_partition(forest, table, x, &q, f_before, feature)?;
        if best.is_none_or(|(_, _, bf)| f > bf) {
            best = Some((feature, partition, f));
        }
    }
    let (feature, partition, _) = best.expect("table has at least one feature");
    action_for(forest, table, x, &q, f_before, feature, partition)
}

/// Scans all partitions of one feature ascending; strict improvement
/// keeps the lowest index on ties. The current partition is evaluated as
/// `f_before` (prediction is constant on the query's cell).
fn best_partition(
    forest: &RandomForest,
    table: &PartitionTable,
    x: &[f64],
    q: &IntegerPoint,
    f_before: f64,
    feature: usize,
) -> Result<(u32, f64)> {
    let mut x_buf = x.to_vec();
    let mut best: Option<(u32, f64)> = None;
    for partition in 1..=table.partition_count(feature) {
        let f = if partition == q.0[feature] {
            f_before
        } else {
            x_buf[feature] = table.undiscretize(feature, partition)?;
            forest.predict_proba(&x_buf)?
        };
        if best.is_none_or(|(_, bf)| f > bf) {
            best = Some((partition, f));
        }
    }
    Ok(best.expect("every feature has at least one partition"))
}
