//! Single-feature recourse for random forest classifiers.
//!
//! Given a forest that separates two classes (expert vs novice) and an
//! instance landing on the undesired side, this crate finds the change of
//! at most one feature that maximizes the forest's probability of the
//! desired class. The search works on an integer discretization of the
//! feature space induced by the forest's own split thresholds: leaves
//! become axis-aligned hyper-rectangles, rectangles that cannot be reached
//! with a single-feature change are pruned, and the remaining space is
//! approximated by a small set of representative lattice points whose
//! densest cluster yields the answer.
//!
//! The crate is `no_std` (with `alloc`); file formats, timing, and the
//! benchmark harness live in the companion `recourse-cli` crate.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod error;
pub mod forest;
pub mod geometry;
pub mod recourse;

#[cfg(test)]
mod testutil;

pub use baselines::{iter_iter, rand_iter, rand_rand, MethodId};
pub use error::{Error, Result};
pub use forest::{
    load_forest, save_forest, train_forest, Dataset, FeatureSpec, Instance, Label, RandomForest,
    Schema, TrainConfig, TreeNode,
};
pub use geometry::{
    enumerate_points, extract_expert_rects, extract_rects, FeaturePartitions, IntRect,
    IntegerPoint, PartitionTable,
};
pub use recourse::{
    densest_center, formulate_feedback, prune_rects, representative_values,
    representatives_per_dim, select_representatives, DaConfig, Direction, FeedbackAction,
    PrunedRect, StarPool,
};
