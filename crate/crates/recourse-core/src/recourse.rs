//! Discrete-approximation feedback formulation.
//!
//! Given a novice query, the expert rectangles are pruned so every
//! remaining lattice point differs from the query in at most one
//! coordinate, a proportion `alpha` of each surviving span is sampled as
//! representative points, and the representative with the most neighbours
//! within radius `gamma` (counted with multiplicity across rectangles)
//! becomes the action target. The emitted action changes at most one
//! feature.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::RandomForest;
use crate::geometry::{IntRect, IntegerPoint, PartitionTable};

/// Tuning knobs of the discrete approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaConfig {
    /// Proportion of a span kept as representatives, in (0, 1].
    pub alpha: f64,
    /// Density radius in partition-index units, >= 0.
    pub gamma: f64,
}

impl DaConfig {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let config = DaConfig { alpha, gamma };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(String::from(
                "alpha must lie in (0, 1]",
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(String::from(
                "gamma must be finite and >= 0",
            )));
        }
        Ok(())
    }
}

impl Default for DaConfig {
    fn default() -> Self {
        DaConfig {
            alpha: 0.5,
            gamma: 2.0,
        }
    }
}

/// Which way the single changed feature moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
    /// The query's own cell is already the best target.
    None,
}

/// A single-feature change recommendation. `feature`, `feature_name` and
/// `target_value` are absent exactly when `direction` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackAction {
    pub feature: Option<usize>,
    pub feature_name: Option<String>,
    pub direction: Direction,
    /// Real-valued target for the changed feature, in original units.
    pub target_value: Option<f64>,
    /// The chosen lattice point (equals the query point for no-change).
    pub target_point: IntegerPoint,
    pub f_before: f64,
    /// Expert probability at the target, `F(x_f)`.
    pub achieved_f: f64,
    /// Formulation wall-clock, filled by timing harnesses.
    pub micros: Option<u64>,
}

impl FeedbackAction {
    pub fn no_change(q: IntegerPoint, f: f64) -> Self {
        FeedbackAction {
            feature: None,
            feature_name: None,
            direction: Direction::None,
            target_value: None,
            target_point: q,
            f_before: f,
            achieved_f: f,
            micros: None,
        }
    }

    pub fn is_no_change(&self) -> bool {
        self.direction == Direction::None
    }
}

/// An expert rectangle restricted around a query point: every dimension
/// except `free_dim` is fixed to the query's partition, so all contained
/// lattice points differ from the query in at most one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedRect {
    pub source: IntRect,
    /// The one dimension where the source rectangle excludes the query;
    /// absent when the query lies inside the source.
    pub free_dim: Option<usize>,
    /// Exclusive lower bounds of the restricted rectangle.
    pub lower: Vec<u32>,
    /// Inclusive upper bounds.
    pub upper: Vec<u32>,
}

impl PrunedRect {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Drops rectangles that disagree with `q` in two or more dimensions and
/// fixes every satisfied dimension of the survivors to `q`'s value.
pub fn prune_rects(rects: &[IntRect], q: &IntegerPoint) -> Vec<PrunedRect> {
    let d = q.dim();
    let mut out = Vec::new();
    'rects: for rect in rects {
        debug_assert_eq!(rect.dim(), d);
        let mut free = None;
        for i in 0..d {
            if !rect.contains_dim(i, q.0[i]) {
                if free.is_some() {
                    continue 'rects;
                }
                free = Some(i);
            }
        }
        let mut lower: Vec<u32> = q.0.iter().map(|&p| p - 1).collect();
        let mut upper: Vec<u32> = q.0.clone();
        if let Some(i) = free {
            lower[i] = rect.lower[i];
            upper[i] = rect.upper[i];
        }
        out.push(PrunedRect {
            source: rect.clone(),
            free_dim: free,
            lower,
            upper,
        });
    }
    out
}

/// Number of representative values for a span `(lower, upper]`:
/// the whole span when it holds at most 2 values, otherwise
/// `ceil(alpha * span) + 2` (both endpoints plus an `alpha` proportion of
/// the interior).
pub fn representatives_per_dim(lower: u32, upper: u32, alpha: f64) -> u32 {
    debug_assert!(upper > lower);
    let w = upper - lower;
    if w <= 2 {
        w
    } else {
        libm::ceil(alpha * w as f64) as u32 + 2
    }
}

/// Emits the representative values of `(lower, upper]` in ascending order
/// with exact duplicates skipped. Interior positions are
/// `lower+1 + k*(w-1)/(n-1)` rounded to the nearest integer (halves away
/// from zero), evaluated in integer arithmetic.
fn for_each_representative(lower: u32, upper: u32, alpha: f64, mut emit: impl FnMut(u32)) {
    debug_assert!(upper > lower);
    let w = upper - lower;
    if w <= 2 {
        for v in lower + 1..=upper {
            emit(v);
        }
        return;
    }
    let n = representatives_per_dim(lower, upper, alpha);
    let den = n as u64 - 1;
    let span = w as u64 - 1;
    let mut last = lower + 1;
    emit(last);
    for k in 1..=n as u64 - 2 {
        let offset = (2 * k * span + den) / (2 * den);
        let v = lower + 1 + offset as u32;
        if v != last {
            emit(v);
            last = v;
        }
    }
    if upper != last {
        emit(upper);
    }
}

/// The distinct representative values of one span, ascending.
pub fn representative_values(lower: u32, upper: u32, alpha: f64) -> Vec<u32> {
    let mut out = Vec::new();
    for_each_representative(lower, upper, alpha, |v| out.push(v));
    out
}

/// Representative lattice points of one pruned rectangle: the Cartesian
/// product of each dimension's representative values, in lexicographic
/// order. For rectangles produced by `prune_rects` at most one dimension
/// contributes more than a single value.
pub fn select_representatives(pr: &PrunedRect, alpha: f64) -> Vec<IntegerPoint> {
    let per_dim: Vec<Vec<u32>> = (0..pr.dim())
        .map(|i| representative_values(pr.lower[i], pr.upper[i], alpha))
        .collect();
    let total: usize = per_dim.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; per_dim.len()];
    loop {
        out.push(IntegerPoint(
            idx.iter().zip(&per_dim).map(|(&k, vals)| vals[k]).collect(),
        ));
        let mut dim = per_dim.len();
        loop {
            if dim == 0 {
                return out;
            }
            dim -= 1;
            idx[dim] += 1;
            if idx[dim] < per_dim[dim].len() {
                break;
            }
            idx[dim] = 0;
        }
    }
}

/// Largest integer squared distance still within radius `gamma`, so that
/// `dist_sq <= max_sq_within(gamma)` agrees exactly with
/// `sqrt(dist_sq) <= gamma` in f64 arithmetic.
pub(crate) fn max_sq_within(gamma: f64) -> u64 {
    if gamma < 0.0 || gamma.is_nan() {
        return 0;
    }
    let cap = gamma * gamma;
    if cap >= 9.0e18 {
        return u64::MAX;
    }
    let mut s = cap as u64;
    while libm::sqrt((s + 1) as f64) <= gamma {
        s += 1;
    }
    while s > 0 && libm::sqrt(s as f64) > gamma {
        s -= 1;
    }
    s
}

/// The candidate with the most neighbours within `gamma`, neighbours
/// counted with multiplicity and excluding one occurrence of the
/// candidate itself. Ties go to the smallest total distance to all
/// occurrences, then to the lexicographically smallest point.
pub fn densest_center(points: &[IntegerPoint], gamma: f64) -> Result<IntegerPoint> {
    if points.is_empty() {
        return Err(Error::NoSolution);
    }
    let mut groups: BTreeMap<&IntegerPoint, u64> = BTreeMap::new();
    for p in points {
        *groups.entry(p).or_insert(0) += 1;
    }
    let distinct: Vec<(&IntegerPoint, u64)> = groups.into_iter().collect();
    let smax = max_sq_within(gamma);

    let mut best_occ = 0u64;
    let occs: Vec<u64> = distinct
        .iter()
        .map(|(p, _)| {
            let mut total = 0u64;
            for (p2, w2) in &distinct {
                if p.dist_sq(p2) <= smax {
                    total += w2;
                }
            }
            let occ = total - 1;
            best_occ = best_occ.max(occ);
            occ
        })
        .collect();

    let tied = occs.iter().filter(|&&o| o == best_occ).count();
    let mut winner: Option<(usize, f64)> = None;
    for (i, (p, _)) in distinct.iter().enumerate() {
        if occs[i] != best_occ {
            continue;
        }
        if tied == 1 {
            return Ok((*p).clone());
        }
        let mut sum = 0.0f64;
        for (p2, w2) in &distinct {
            sum += *w2 as f64 * libm::sqrt(p.dist_sq(p2) as f64);
        }
        match winner {
            Some((_, best)) if sum >= best => {}
            _ => winner = Some((i, sum)),
        }
    }
    let (index, _) = winner.expect("tie set is non-empty");
    Ok(distinct[index].0.clone())
}

/// Sorted distinct candidate values of one axis with prefix-summed
/// weights; never contains the query's own coordinate.
struct AxisTable {
    values: Vec<u32>,
    /// `prefix[k]` = total weight of `values[..k]`.
    prefix: Vec<u64>,
    /// Count of values below the query coordinate.
    below: usize,
}

impl AxisTable {
    fn weight_at(&self, index: usize) -> u64 {
        self.prefix[index + 1] - self.prefix[index]
    }

    /// Total weight of values in `[lo, hi]`.
    fn window(&self, lo: u32, hi: u32) -> u64 {
        let a = self.values.partition_point(|&v| v < lo);
        let b = self.values.partition_point(|&v| v <= hi);
        self.prefix[b] - self.prefix[a]
    }

    fn total(&self) -> u64 {
        *self.prefix.last().expect("prefix never empty")
    }
}

/// A candidate inside a pool, identified without materializing the full
/// lattice point.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Cand {
    Query,
    Axis { axis: usize, index: usize },
}

/// The pooled representative multiset of all pruned rectangles around one
/// query. Every candidate differs from the query in at most one
/// coordinate, so the pool stores per-axis weight tables instead of full
/// points and density search runs in near-linear time. Results are
/// exactly those of [`densest_center`] on the materialized multiset.
pub struct StarPool {
    q: IntegerPoint,
    q_weight: u64,
    axes: Vec<AxisTable>,
}

impl StarPool {
    /// Accumulates the representatives of every pruned rectangle. Zero
    /// violation rectangles contribute one occurrence of the query point
    /// each; the rest contribute their free dimension's representative
    /// values with multiplicity.
    pub fn build(
        q: &IntegerPoint,
        pruned: &[PrunedRect],
        alpha: f64,
        table: &PartitionTable,
    ) -> StarPool {
        let d = q.dim();
        let mut buckets: Vec<Vec<u64>> = vec![Vec::new(); d];
        let mut q_weight = 0u64;
        for pr in pruned {
            match pr.free_dim {
                None => q_weight += 1,
                Some(i) => {
                    let bucket = &mut buckets[i];
                    if bucket.is_empty() {
                        bucket.resize(table.partition_count(i) as usize + 1, 0);
                    }
                    for_each_representative(pr.lower[i], pr.upper[i], alpha, |v| {
                        debug_assert_ne!(v, q.0[i]);
                        bucket[v as usize] += 1;
                    });
                }
            }
        }
        Self::finish(q, buckets, q_weight)
    }

    /// Same pool as `build(q, prune_rects(rects, q), ..)` without
    /// materializing the pruned rectangles; this is the per-query hot
    /// path, so it avoids any per-rectangle allocation.
    pub fn from_rects(
        q: &IntegerPoint,
        rects: &[IntRect],
        alpha: f64,
        table: &PartitionTable,
    ) -> StarPool {
        let d = q.dim();
        let mut buckets: Vec<Vec<u64>> = vec![Vec::new(); d];
        let mut q_weight = 0u64;
        'rects: for rect in rects {
            debug_assert_eq!(rect.dim(), d);
            let mut free = None;
            for i in 0..d {
                if !rect.contains_dim(i, q.0[i]) {
                    if free.is_some() {
                        continue 'rects;
                    }
                    free = Some(i);
                }
            }
            match free {
                None => q_weight += 1,
                Some(i) => {
                    let bucket = &mut buckets[i];
                    if bucket.is_empty() {
                        bucket.resize(table.partition_count(i) as usize + 1, 0);
                    }
                    for_each_representative(rect.lower[i], rect.upper[i], alpha, |v| {
                        debug_assert_ne!(v, q.0[i]);
                        bucket[v as usize] += 1;
                    });
                }
            }
        }
        Self::finish(q, buckets, q_weight)
    }

    fn finish(q: &IntegerPoint, buckets: Vec<Vec<u64>>, q_weight: u64) -> StarPool {
        let axes = buckets
            .iter()
            .enumerate()
            .map(|(i, bucket)| {
                let mut values = Vec::new();
                let mut prefix = vec![0u64];
                let mut running = 0u64;
                for (v, &w) in bucket.iter().enumerate() {
                    if w > 0 {
                        values.push(v as u32);
                        running += w;
                        prefix.push(running);
                    }
                }
                let below = values.partition_point(|&v| v < q.0[i]);
                AxisTable {
                    values,
                    prefix,
                    below,
                }
            })
            .collect();
        StarPool {
            q: q.clone(),
            q_weight,
            axes,
        }
    }

    pub fn q_weight(&self) -> u64 {
        self.q_weight
    }

    pub fn total_weight(&self) -> u64 {
        self.q_weight + self.axes.iter().map(AxisTable::total).sum::<u64>()
    }

    pub fn is_empty(&self) -> bool {
        self.total_weight() == 0
    }

    /// The distinct candidates with weights, in lexicographic point
    /// order; for oracles and tests.
    pub fn weighted_points(&self) -> Vec<(IntegerPoint, u64)> {
        let mut out = Vec::new();
        self.visit_lex(|c| out.push((self.point_of(c), self.weight(c))));
        out
    }

    /// Visits candidates in lexicographic order of their full lattice
    /// points: per axis the below-query values ascending, then the query
    /// itself, then above-query values by descending axis.
    fn visit_lex(&self, mut f: impl FnMut(Cand)) {
        for (axis, t) in self.axes.iter().enumerate() {
            for index in 0..t.below {
                f(Cand::Axis { axis, index });
            }
        }
        if self.q_weight > 0 {
            f(Cand::Query);
        }
        for (axis, t) in self.axes.iter().enumerate().rev() {
            for index in t.below..t.values.len() {
                f(Cand::Axis { axis, index });
            }
        }
    }

    fn point_of(&self, c: Cand) -> IntegerPoint {
        match c {
            Cand::Query => self.q.clone(),
            Cand::Axis { axis, index } => {
                let mut p = self.q.clone();
                p.0[axis] = self.axes[axis].values[index];
                p
            }
        }
    }

    fn weight(&self, c: Cand) -> u64 {
        match c {
            Cand::Query => self.q_weight,
            Cand::Axis { axis, index } => self.axes[axis].weight_at(index),
        }
    }

    fn dist_sq(&self, a: Cand, b: Cand) -> u64 {
        let leg = |axis: usize, index: usize| {
            let dv = self.axes[axis].values[index].abs_diff(self.q.0[axis]) as u64;
            dv * dv
        };
        match (a, b) {
            (Cand::Query, Cand::Query) => 0,
            (Cand::Query, Cand::Axis { axis, index })
            | (Cand::Axis { axis, index }, Cand::Query) => leg(axis, index),
            (
                Cand::Axis { axis: i, index: ii },
                Cand::Axis { axis: j, index: jj },
            ) => {
                if i == j {
                    let dv = self.axes[i].values[ii].abs_diff(self.axes[j].values[jj]) as u64;
                    dv * dv
                } else {
                    leg(i, ii) + leg(j, jj)
                }
            }
        }
    }

    /// Neighbour weight within `sqrt(smax)`, minus the candidate's own
    /// occurrence. `r_axis` is the integer radius along a single axis.
    fn occurrence(&self, cand: Cand, smax: u64, r_axis: u32) -> u64 {
        let total = match cand {
            Cand::Query => {
                let mut t = self.q_weight;
                for (j, axis) in self.axes.iter().enumerate() {
                    let qj = self.q.0[j];
                    t += axis.window(qj.saturating_sub(r_axis), qj.saturating_add(r_axis));
                }
                t
            }
            Cand::Axis { axis, index } => {
                let v = self.axes[axis].values[index];
                let mut t =
                    self.axes[axis].window(v.saturating_sub(r_axis), v.saturating_add(r_axis));
                let a = v.abs_diff(self.q.0[axis]) as u64;
                let a2 = a * a;
                if a2 <= smax {
                    t += self.q_weight;
                    let b = (smax - a2).isqrt().min(u32::MAX as u64) as u32;
                    if b >= 1 {
                        for (j, other) in self.axes.iter().enumerate() {
                            if j == axis {
                                continue;
                            }
                            let qj = self.q.0[j];
                            t += other.window(qj.saturating_sub(b), qj.saturating_add(b));
                        }
                    }
                }
                t
            }
        };
        total - 1
    }

    /// Total weighted distance from `cand` to every candidate, summed in
    /// lexicographic order so results are bit-identical to the generic
    /// search.
    fn distance_sum(&self, cand: Cand) -> f64 {
        let mut sum = 0.0f64;
        self.visit_lex(|other| {
            let w = self.weight(other) as f64;
            sum += w * libm::sqrt(self.dist_sq(cand, other) as f64);
        });
        sum
    }

    /// Same contract as [`densest_center`], evaluated on the pool without
    /// materializing it.
    pub fn densest_center(&self, gamma: f64) -> Result<IntegerPoint> {
        if self.is_empty() {
            return Err(Error::NoSolution);
        }
        let smax = max_sq_within(gamma);
        let r_axis = smax.isqrt().min(u32::MAX as u64) as u32;

        let mut cands = Vec::new();
        self.visit_lex(|c| cands.push(c));
        let mut best_occ = 0u64;
        let occs: Vec<u64> = cands
            .iter()
            .map(|&c| {
                let occ = self.occurrence(c, smax, r_axis);
                best_occ = best_occ.max(occ);
                occ
            })
            .collect();

        let tied = occs.iter().filter(|&&o| o == best_occ).count();
        let mut winner: Option<(Cand, f64)> = None;
        for (&c, &occ) in cands.iter().zip(&occs) {
            if occ != best_occ {
                continue;
            }
            if tied == 1 {
                return Ok(self.point_of(c));
            }
            let sum = self.distance_sum(c);
            match winner {
                Some((_, best)) if sum >= best => {}
                _ => winner = Some((c, sum)),
            }
        }
        let (cand, _) = winner.expect("tie set is non-empty");
        Ok(self.point_of(cand))
    }
}

/// The full pipeline for one query: discretize, prune the expert
/// rectangles, pool representatives, pick the densest center, and
/// translate the changed coordinate back to a real value.
///
/// `rects` must be the expert rectangles of `forest` under `table`.
/// Errors: the query classifying expert (`F(x) > 0.5`), or no rectangle
/// surviving pruning.
pub fn formulate_feedback(
    forest: &RandomForest,
    table: &PartitionTable,
    rects: &[IntRect],
    x: &[f64],
    config: &DaConfig,
) -> Result<FeedbackAction> {
    config.validate()?;
    let f_before = forest.predict_proba(x)?;
    if f_before > 0.5 {
        return Err(Error::AlreadyExpert { f: f_before });
    }
    let q = table.discretize(x)?;
    let pool = StarPool::from_rects(&q, rects, config.alpha, table);
    if pool.is_empty() {
        // No expert rectangle survives pruning against this query.
        return Err(Error::NoSolution);
    }
    let center = pool.densest_center(config.gamma)?;
    if center == q {
        return Ok(FeedbackAction::no_change(q, f_before));
    }
    let feature = (0..q.dim())
        .find(|&i| center.0[i] != q.0[i])
        .expect("center differs from query");
    debug_assert_eq!(center.hamming(&q), 1);
    let target = table.undiscretize(feature, center.0[feature])?;
    let mut x_after = x.to_vec();
    x_after[feature] = target;
    let achieved_f = forest.predict_proba(&x_after)?;
    if pool.q_weight() > 0 && achieved_f < f_before {
        // The query's own cell was a candidate; never recommend a move
        // that lowers F below it.
        return Ok(FeedbackAction::no_change(q, f_before));
    }
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
        target_point: center,
        f_before,
        achieved_f,
        micros: None,
    })
}
