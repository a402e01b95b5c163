//! Benchmark protocol: leave-one-novice-group-out cross-validation plus
//! the tree-count and alpha sweeps. Per-query wall-clock covers feedback
//! formulation only; training and rectangle extraction are per-fold setup.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use recourse_core::{
    extract_expert_rects, formulate_feedback, iter_iter, rand_iter, rand_rand, DaConfig, Dataset,
    Direction, Error as CoreError, FeedbackAction, IntRect, MethodId, PartitionTable, RandomForest,
    TrainConfig,
};
use serde::Serialize;

use crate::io::usage;

/// Derives an independent 64-bit seed from the run seed, a stream name
/// and positional indices. Splitmix-style finalizer; stable across
/// platforms so seeded runs reproduce everywhere.
pub fn sub_seed(base: u64, stream: &str, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut h = mix(base ^ 0x6A09_E667_F3BC_C909);
    for byte in stream.bytes() {
        h = mix(h ^ u64::from(byte));
    }
    for &part in parts {
        h = mix(h ^ part);
    }
    h
}

pub fn direction_str(direction: Direction) -> &'static str {
    match direction {
        Direction::Increase => "increase",
        Direction::Decrease => "decrease",
        Direction::None => "none",
    }
}

/// One method applied to one held-out query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// Group id of the fold the query came from.
    pub fold: u32,
    pub method: MethodId,
    pub f_before: f64,
    /// F at the prescribed target; equals `f_before` when no action exists.
    pub f_after: f64,
    pub success: bool,
    pub micros: u64,
    pub feature: Option<String>,
    pub direction: Direction,
    pub target: Option<f64>,
}

/// Fraction of queries pushed past F > 0.5.
pub fn success_rate(results: &[QueryResult]) -> recourse_core::Result<f64> {
    if results.is_empty() {
        return Err(CoreError::UndefinedMetric);
    }
    let hits = results.iter().filter(|r| r.success).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Mean and population std of achieved F over all attempted queries,
/// failures included.
pub fn effectiveness(results: &[QueryResult]) -> recourse_core::Result<(f64, f64)> {
    if results.is_empty() {
        return Err(CoreError::UndefinedMetric);
    }
    Ok(stats(results.iter().map(|r| r.f_after)))
}

fn stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub sr: f64,
    pub eff_mean: f64,
    pub eff_std: f64,
    /// Seconds.
    pub tc_mean: f64,
    pub tc_std: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    /// Held-out novice group id.
    pub group: u32,
    pub train_size: usize,
    pub held_out: usize,
    /// Held-out instances the fold's forest classified novice.
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub methods: Vec<String>,
    pub train: TrainConfig,
    pub da: DaConfig,
    pub n_instances: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub config: ReportConfig,
    pub folds: Vec<FoldSummary>,
    pub methods: BTreeMap<String, MethodMetrics>,
    /// Per-query rows behind the aggregates; persisted as CSV, not JSON.
    #[serde(skip)]
    pub queries: Vec<QueryResult>,
}

impl MetricsReport {
    pub fn method(&self, id: MethodId) -> &MethodMetrics {
        &self.methods[id.name()]
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Audit CSV, one row per (query, method).
pub fn write_queries_csv(path: &Path, results: &[QueryResult]) -> anyhow::Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    writer.write_record([
        "fold", "method", "f_before", "f_after", "success", "micros", "feature", "direction",
        "target",
    ])?;
    for row in results {
        writer.write_record([
            row.fold.to_string(),
            row.method.name().to_string(),
            row.f_before.to_string(),
            row.f_after.to_string(),
            row.success.to_string(),
            row.micros.to_string(),
            row.feature.clone().unwrap_or_default(),
            direction_str(row.direction).to_string(),
            row.target.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

struct FoldContext {
    forest: RandomForest,
    table: PartitionTable,
    rects: Vec<IntRect>,
}

fn prepare_fold(dataset: &Dataset, indices: &[usize], train: &TrainConfig) -> anyhow::Result<FoldContext> {
    let instances = indices.iter().map(|&i| dataset.instances()[i].clone()).collect();
    let subset = Dataset::new(dataset.schema().clone(), instances)?;
    let forest = recourse_core::train_forest(&subset, train)?;
    let table = PartitionTable::from_forest(&forest);
    let rects = extract_expert_rects(&forest, &table);
    Ok(FoldContext { forest, table, rects })
}

fn run_method(
    context: &FoldContext,
    method: MethodId,
    da: &DaConfig,
    x: &[f64],
    seed: u64,
) -> recourse_core::Result<FeedbackAction> {
    match method {
        MethodId::Da => {
            formulate_feedback(&context.forest, &context.table, &context.rects, x, da)
        }
        MethodId::IterIter => iter_iter(&context.forest, &context.table, x),
        MethodId::RandRand => rand_rand(&context.forest, &context.table, x, seed),
        MethodId::RandIter => rand_iter(&context.forest, &context.table, x, seed),
    }
}

/// What one timed attempt produced: `f_after`, microseconds, and the
/// recommended feature, direction and target (when a change was found).
type Attempt = (f64, u64, Option<String>, Direction, Option<f64>);

/// Runs one method on one query, timing the full formulation. A missing
/// candidate set (`NoSolution`) counts as a failed attempt that leaves
/// the query unchanged.
fn attempt(
    context: &FoldContext,
    method: MethodId,
    da: &DaConfig,
    x: &[f64],
    f_before: f64,
    seed: u64,
    repeats: usize,
) -> anyhow::Result<Attempt> {
    debug_assert!(repeats >= 1);
    let mut best_micros = u64::MAX;
    let mut outcome = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let result = run_method(context, method, da, x, seed);
        let micros = start.elapsed().as_micros() as u64;
        best_micros = best_micros.min(micros);
        if outcome.is_none() {
            outcome = Some(match result {
                Ok(action) => (
                    action.achieved_f,
                    action.feature_name.clone(),
                    action.direction,
                    action.target_value,
                ),
                Err(CoreError::NoSolution) => (f_before, None, Direction::None, None),
                Err(e) => return Err(e.into()),
            });
        }
    }
    let (f_after, feature, direction, target) = outcome.expect("at least one repeat");
    Ok((f_after, best_micros, feature, direction, target))
}

/// Sorted group ids that contain at least one novice instance; groups
/// without novices are reported and skipped.
fn novice_groups(dataset: &Dataset, warn: bool) -> Vec<u32> {
    let mut with_novices = BTreeSet::new();
    let mut all = BTreeSet::new();
    for inst in dataset.instances() {
        all.insert(inst.group);
        if !inst.label.is_expert() {
            with_novices.insert(inst.group);
        }
    }
    if warn {
        for group in all.difference(&with_novices) {
            eprintln!("warning: group {group} has no novice instances; skipped as a fold");
        }
    }
    with_novices.into_iter().collect()
}

fn method_metrics(rows: &[QueryResult], methods: &[MethodId]) -> BTreeMap<String, MethodMetrics> {
    let mut out = BTreeMap::new();
    for &method in methods {
        let mine: Vec<QueryResult> =
            rows.iter().filter(|r| r.method == method).cloned().collect();
        let sr = success_rate(&mine).unwrap_or(0.0);
        let (eff_mean, eff_std) = effectiveness(&mine).unwrap_or((0.0, 0.0));
        let (tc_mean, tc_std) = if mine.is_empty() {
            (0.0, 0.0)
        } else {
            stats(mine.iter().map(|r| r.micros as f64 / 1e6))
        };
        out.insert(
            method.name().to_string(),
            MethodMetrics { sr, eff_mean, eff_std, tc_mean, tc_std, n_queries: mine.len() },
        );
    }
    out
}

/// Leave-one-novice-group-out cross-validation. Per fold: hold out every
/// instance of one novice group, train on the rest, and formulate
/// feedback with each method for every held-out instance the forest
/// classifies novice (F <= 0.5). Aggregates pool queries across folds.
pub fn run_cv_benchmark(
    dataset: &Dataset,
    methods: &[MethodId],
    train: &TrainConfig,
    da: &DaConfig,
    seed: u64,
) -> anyhow::Result<MetricsReport> {
    if methods.is_empty() {
        return Err(usage("no methods selected"));
    }
    da.validate().map_err(|e| usage(e.to_string()))?;
    train.validate(dataset.dim()).map_err(|e| usage(e.to_string()))?;
    let groups = novice_groups(dataset, true);
    if groups.len() < 2 {
        return Err(usage(format!(
            "cross-validation needs at least 2 novice groups, found {}",
            groups.len()
        )));
    }

    let mut folds = Vec::with_capacity(groups.len());
    let mut rows = Vec::new();
    for &group in &groups {
        let (held_idx, train_idx): (Vec<usize>, Vec<usize>) =
            (0..dataset.len()).partition(|&i| dataset.instances()[i].group == group);
        assert!(
            held_idx.iter().all(|i| !train_idx.contains(i)),
            "fold {group}: leaked held-out instance into training"
        );
        let fold_train = TrainConfig {
            seed: sub_seed(seed, "train", &[u64::from(group)]),
            ..train.clone()
        };
        let context = prepare_fold(dataset, &train_idx, &fold_train)?;

        let mut n_queries = 0;
        for (query_index, &i) in held_idx.iter().enumerate() {
            let x = &dataset.instances()[i].features;
            let f_before = context.forest.predict_proba(x)?;
            if f_before > 0.5 {
                continue;
            }
            n_queries += 1;
            for (method_index, &method) in methods.iter().enumerate() {
                let method_seed = sub_seed(
                    seed,
                    "method",
                    &[u64::from(group), query_index as u64, method_index as u64],
                );
                let (f_after, micros, feature, direction, target) =
                    attempt(&context, method, da, x, f_before, method_seed, 1)?;
                rows.push(QueryResult {
                    fold: group,
                    method,
                    f_before,
                    f_after,
                    success: f_after > 0.5,
                    micros,
                    feature,
                    direction,
                    target,
                });
            }
        }
        folds.push(FoldSummary {
            group,
            train_size: train_idx.len(),
            held_out: held_idx.len(),
            n_queries,
        });
    }

    let methods_map = method_metrics(&rows, methods);
    Ok(MetricsReport {
        config: ReportConfig {
            seed,
            methods: methods.iter().map(|m| m.name().to_string()).collect(),
            train: train.clone(),
            da: *da,
            n_instances: dataset.len(),
            d: dataset.dim(),
        },
        folds,
        methods: methods_map,
        queries: rows,
    })
}

/// Shared knobs for the two sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub seed: u64,
    /// How many of the highest novice group ids supply queries.
    pub holdout_groups: usize,
    pub max_queries: usize,
    /// Per-query timing repeats; the minimum is recorded.
    pub repeats: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { seed: 0, holdout_groups: 1, max_queries: 25, repeats: 3 }
    }
}

/// Query pool for a sweep: train on everything outside the held-out
/// groups, query held-out instances the forest calls novice.
fn sweep_split(dataset: &Dataset, options: &SweepOptions) -> anyhow::Result<(Vec<usize>, Vec<usize>)> {
    if options.holdout_groups == 0 || options.max_queries == 0 || options.repeats == 0 {
        return Err(usage("sweep options must be positive"));
    }
    let groups = novice_groups(dataset, false);
    if groups.len() <= options.holdout_groups {
        return Err(usage(format!(
            "sweep needs more than {} novice groups, found {}",
            options.holdout_groups,
            groups.len()
        )));
    }
    let held: BTreeSet<u32> =
        groups[groups.len() - options.holdout_groups..].iter().copied().collect();
    Ok((0..dataset.len()).partition(|&i| !held.contains(&dataset.instances()[i].group)))
}

fn query_sample(
    dataset: &Dataset,
    context: &FoldContext,
    held_idx: &[usize],
    max_queries: usize,
) -> anyhow::Result<Vec<(usize, f64)>> {
    let mut queries = Vec::new();
    for &i in held_idx {
        let f = context.forest.predict_proba(&dataset.instances()[i].features)?;
        if f <= 0.5 {
            queries.push((i, f));
            if queries.len() == max_queries {
                break;
            }
        }
    }
    Ok(queries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub tc_mean: f64,
    pub tc_std: f64,
    pub eff_mean: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub trees: usize,
    /// Sum of partition counts over features: the single-change
    /// candidate count an exhaustive scan faces.
    pub candidates: u64,
    pub methods: BTreeMap<String, SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Re-trains at each tree count (ascending) and times each method over a
/// fixed query sample from the held-out groups.
pub fn scalability_sweep(
    dataset: &Dataset,
    tree_counts: &[usize],
    methods: &[MethodId],
    train: &TrainConfig,
    da: &DaConfig,
    options: &SweepOptions,
) -> anyhow::Result<SweepReport> {
    if tree_counts.is_empty() || tree_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("tree counts must be ascending and non-empty"));
    }
    if methods.is_empty() {
        return Err(usage("no methods selected"));
    }
    da.validate().map_err(|e| usage(e.to_string()))?;
    let (train_idx, held_idx) = sweep_split(dataset, options)?;

    let mut rows = Vec::with_capacity(tree_counts.len());
    for &count in tree_counts {
        let fold_train = TrainConfig {
            n_trees: count,
            seed: sub_seed(options.seed, "train", &[count as u64]),
            ..train.clone()
        };
        fold_train.validate(dataset.dim()).map_err(|e| usage(e.to_string()))?;
        let context = prepare_fold(dataset, &train_idx, &fold_train)?;
        let queries = query_sample(dataset, &context, &held_idx, options.max_queries)?;

        let mut cells = BTreeMap::new();
        for (method_index, &method) in methods.iter().enumerate() {
            let mut micros = Vec::with_capacity(queries.len());
            let mut f_afters = Vec::with_capacity(queries.len());
            for (query_index, &(i, f_before)) in queries.iter().enumerate() {
                let x = &dataset.instances()[i].features;
                let method_seed = sub_seed(
                    options.seed,
                    "method",
                    &[count as u64, query_index as u64, method_index as u64],
                );
                let (f_after, best, _, _, _) =
                    attempt(&context, method, da, x, f_before, method_seed, options.repeats)?;
                micros.push(best as f64 / 1e6);
                f_afters.push(f_after);
            }
            let (tc_mean, tc_std) = stats(micros.iter().copied());
            let (eff_mean, _) = stats(f_afters.iter().copied());
            cells.insert(
                method.name().to_string(),
                SweepCell { tc_mean, tc_std, eff_mean, n_queries: queries.len() },
            );
        }
        rows.push(SweepRow {
            trees: count,
            candidates: context.table.total_partitions(),
            methods: cells,
        });
    }
    Ok(SweepReport { seed: options.seed, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub eff_mean: f64,
    pub eff_std: f64,
    pub tc_mean: f64,
    pub tc_std: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaReport {
    pub gamma: f64,
    pub seed: u64,
    pub rows: Vec<AlphaRow>,
}

/// Runs the density method at each alpha against one fixed forest and
/// query sample.
pub fn alpha_sweep(
    dataset: &Dataset,
    alphas: &[f64],
    gamma: f64,
    train: &TrainConfig,
    options: &SweepOptions,
) -> anyhow::Result<AlphaReport> {
    if alphas.is_empty() {
        return Err(usage("no alphas given"));
    }
    for &alpha in alphas {
        DaConfig { alpha, gamma }.validate().map_err(|e| usage(e.to_string()))?;
    }
    train.validate(dataset.dim()).map_err(|e| usage(e.to_string()))?;
    let (train_idx, held_idx) = sweep_split(dataset, options)?;
    let fold_train = TrainConfig { seed: sub_seed(options.seed, "train", &[0]), ..train.clone() };
    let context = prepare_fold(dataset, &train_idx, &fold_train)?;
    let queries = query_sample(dataset, &context, &held_idx, options.max_queries)?;

    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let da = DaConfig { alpha, gamma };
        let mut micros = Vec::with_capacity(queries.len());
        let mut f_afters = Vec::with_capacity(queries.len());
        for &(i, f_before) in &queries {
            let x = &dataset.instances()[i].features;
            let (f_after, best, _, _, _) =
                attempt(&context, MethodId::Da, &da, x, f_before, 0, options.repeats)?;
            micros.push(best as f64 / 1e6);
            f_afters.push(f_after);
        }
        let (tc_mean, tc_std) = stats(micros.iter().copied());
        let (eff_mean, eff_std) = stats(f_afters.iter().copied());
        rows.push(AlphaRow { alpha, eff_mean, eff_std, tc_mean, tc_std, n_queries: queries.len() });
    }
    Ok(AlphaReport { gamma, seed: options.seed, rows })
}
