//! `recourse`: generate data, train forests, formulate feedback for a
//! single query, and run the benchmark protocol. Exit codes: 0 success,
//! 2 usage or validation problem, 1 runtime failure.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use recourse_cli::eval::{self, sub_seed, SweepOptions};
use recourse_cli::io::{read_dataset_csv, read_forest, usage, write_dataset_csv, write_forest, UsageError};
use recourse_cli::synth::{generate_synthetic, SyntheticConfig};
use recourse_cli::MetricsReport;
use recourse_core::{
    formulate_feedback, train_forest, DaConfig, Direction, Error as CoreError, MethodId,
    PartitionTable, TrainConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "recourse",
    version,
    about = "Single-feature recourse for random forest classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded two-class Gaussian dataset CSV.
    GenData(GenDataArgs),
    /// Train a random forest from a dataset CSV and write it as JSON.
    Train(TrainArgs),
    /// Recommend a single-feature change for one query.
    Feedback(FeedbackArgs),
    /// Cross-validated benchmark, or a tree-count / alpha sweep.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Total instances, split evenly between the classes [default: 5000]
    #[arg(long)]
    n: Option<usize>,
    /// Feature count [default: 6]
    #[arg(long)]
    d: Option<usize>,
    /// Novice group count [default: 12]
    #[arg(long)]
    groups: Option<u32>,
    /// Class center separation in noise-sigma units [default: 3.0]
    #[arg(long)]
    sep: Option<f64>,
    /// Per-coordinate noise sigma [default: 1.0]
    #[arg(long)]
    noise: Option<f64>,
    /// Run seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(short, long)]
    out: PathBuf,
    /// key=value defaults file; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV
    #[arg(short, long)]
    input: PathBuf,
    /// Output forest JSON path
    #[arg(short, long)]
    out: PathBuf,
    /// Number of trees [default: 100]
    #[arg(long)]
    trees: Option<usize>,
    /// Maximum tree depth [default: 5]
    #[arg(long)]
    depth: Option<usize>,
    /// Features sampled per tree [default: ceil(sqrt(d))]
    #[arg(long)]
    features_per_tree: Option<usize>,
    /// Run seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// key=value defaults file; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FeedbackArgs {
    /// Forest JSON file
    #[arg(short, long)]
    forest: PathBuf,
    /// Inline query vector, comma separated, e.g. "0.4,0.8"
    #[arg(long)]
    query: Option<String>,
    /// Dataset CSV to take the query from (with --row)
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Zero-based row index into the dataset given by -i
    #[arg(long)]
    row: Option<usize>,
    /// One of da, iter-iter, rand-rand, rand-iter [default: da]
    #[arg(long)]
    method: Option<String>,
    /// Representative-point proportion in (0,1] [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Neighbourhood radius in lattice units [default: 2.0]
    #[arg(long)]
    gamma: Option<f64>,
    /// Run seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// key=value defaults file; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset CSV
    #[arg(short, long)]
    input: PathBuf,
    /// Comma-separated methods [default: da,iter-iter,rand-rand,rand-iter]
    #[arg(long)]
    methods: Option<String>,
    /// Number of trees [default: 100]
    #[arg(long)]
    trees: Option<usize>,
    /// Maximum tree depth [default: 5]
    #[arg(long)]
    depth: Option<usize>,
    /// Features sampled per tree [default: ceil(sqrt(d))]
    #[arg(long)]
    features_per_tree: Option<usize>,
    /// Representative-point proportion in (0,1] [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Neighbourhood radius in lattice units [default: 2.0]
    #[arg(long)]
    gamma: Option<f64>,
    /// Run seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON output path [default: report.json]
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-query CSV output path [default: queries.csv]
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Sweep instead of the cross-validated benchmark:
    /// trees=START:END:STEP or alpha=START:END:STEP
    #[arg(long)]
    sweep: Option<String>,
    /// Query sample cap per sweep point [default: 25]
    #[arg(long)]
    max_queries: Option<usize>,
    /// key=value defaults file; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Feedback(args) => cmd_feedback(args),
        Command::Bench(args) => cmd_bench(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        let is_usage = err.chain().any(|cause| cause.downcast_ref::<UsageError>().is_some());
        std::process::exit(if is_usage { 2 } else { 1 });
    }
}

/// Defaults file: one `key=value` per line, `#` comments. Keys mirror the
/// long flag names of the subcommand; an explicit flag always wins.
struct Overlay {
    map: BTreeMap<String, String>,
}

impl Overlay {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = match fs::read_to_string(path) {
                Ok(text) => text,
                Err(e) if e.kind() == ErrorKind::NotFound => {
                    return Err(usage(format!("no such file: {}", path.display())))
                }
                Err(e) => return Err(anyhow::Error::new(e).context(format!("reading {}", path.display()))),
            };
            for (index, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    usage(format!("{}: line {}: expected key=value", path.display(), index + 1))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Overlay { map })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key {key}: invalid value {raw:?}: {e}"))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            return Err(usage(format!("config: unknown key {key:?} for this command")));
        }
        Ok(())
    }
}

fn pick<T: FromStr>(flag: Option<T>, overlay: &mut Overlay, key: &str, default: T) -> Result<T>
where
    T::Err: Display,
{
    // Consume (and validate) the config entry even when the flag wins.
    let from_config = overlay.take(key)?;
    Ok(flag.or(from_config).unwrap_or(default))
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let mut overlay = Overlay::load(args.config.as_deref())?;
    let n = pick(args.n, &mut overlay, "n", 5000)?;
    let d = pick(args.d, &mut overlay, "d", 6)?;
    let groups = pick(args.groups, &mut overlay, "groups", 12)?;
    let sep = pick(args.sep, &mut overlay, "sep", 3.0)?;
    let noise = pick(args.noise, &mut overlay, "noise", 1.0)?;
    let seed = pick(args.seed, &mut overlay, "seed", 0)?;
    overlay.finish()?;

    if n == 0 || n % 2 != 0 {
        return Err(usage("--n must be a positive even total"));
    }
    let config = SyntheticConfig {
        n_per_class: n / 2,
        d,
        separation: sep,
        noise_sigma: noise,
        n_groups: groups,
        seed: sub_seed(seed, "data", &[]),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = generate_synthetic(&config)?;
    write_dataset_csv(&args.out, &dataset)?;
    println!(
        "wrote {}: {} instances, d={}, {} novice groups",
        args.out.display(),
        dataset.len(),
        d,
        groups
    );
    Ok(())
}

fn build_train_config(
    dim: usize,
    trees: usize,
    depth: usize,
    features_per_tree: Option<usize>,
    seed: u64,
) -> Result<TrainConfig> {
    let mut config = TrainConfig::default_for_dim(dim);
    config.n_trees = trees;
    config.max_depth = depth;
    if let Some(fpt) = features_per_tree {
        config.features_per_tree = fpt;
    }
    config.seed = seed;
    config.validate(dim).map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut overlay = Overlay::load(args.config.as_deref())?;
    let trees = pick(args.trees, &mut overlay, "trees", 100)?;
    let depth = pick(args.depth, &mut overlay, "depth", 5)?;
    let features_per_tree = args.features_per_tree.or(overlay.take("features-per-tree")?);
    let seed = pick(args.seed, &mut overlay, "seed", 0)?;
    overlay.finish()?;

    let dataset = read_dataset_csv(&args.input)?;
    let config = build_train_config(
        dataset.dim(),
        trees,
        depth,
        features_per_tree,
        sub_seed(seed, "train", &[]),
    )?;
    let forest = train_forest(&dataset, &config).map_err(|e| usage(e.to_string()))?;
    write_forest(&args.out, &forest)?;
    println!("train accuracy: {:.4}", forest.accuracy(&dataset)?);
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Stdout shape of a feedback run. `feature`/`target` are null for
/// no-change outcomes and for already-expert queries.
#[derive(Serialize)]
struct ActionWire {
    feature: Option<String>,
    direction: &'static str,
    target: Option<f64>,
    f_before: f64,
    f_after: f64,
    micros: u64,
    already_expert: bool,
}

fn parse_query(raw: &str) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> =
        raw.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(usage(format!(
            "malformed query vector {raw:?}: expected comma-separated finite numbers"
        ))),
    }
}

fn cmd_feedback(args: FeedbackArgs) -> Result<()> {
    let mut overlay = Overlay::load(args.config.as_deref())?;
    let method_name = pick(args.method, &mut overlay, "method", "da".to_string())?;
    let alpha = pick(args.alpha, &mut overlay, "alpha", 0.5)?;
    let gamma = pick(args.gamma, &mut overlay, "gamma", 2.0)?;
    let seed = pick(args.seed, &mut overlay, "seed", 0)?;
    overlay.finish()?;

    let method = MethodId::from_str(&method_name).map_err(|e| usage(e.to_string()))?;
    let da = DaConfig { alpha, gamma };
    da.validate().map_err(|e| usage(e.to_string()))?;

    let forest = read_forest(&args.forest)?;
    let x = match (&args.query, args.row) {
        (Some(query), None) => parse_query(query)?,
        (None, Some(row)) => {
            let input = args
                .input
                .as_ref()
                .ok_or_else(|| usage("--row needs a dataset via -i <data.csv>"))?;
            let dataset = read_dataset_csv(input)?;
            dataset
                .instances()
                .get(row)
                .ok_or_else(|| {
                    usage(format!("--row {row} out of range ({} instances)", dataset.len()))
                })?
                .features
                .clone()
        }
        _ => return Err(usage("give the query as either --query or -i <data.csv> --row N")),
    };
    forest.schema().check_instance(&x).map_err(|e| usage(e.to_string()))?;

    let table = PartitionTable::from_forest(&forest);
    let rects = recourse_core::extract_expert_rects(&forest, &table);

    let start = Instant::now();
    let f_before = forest.predict_proba(&x)?;
    if f_before > 0.5 {
        let wire = ActionWire {
            feature: None,
            direction: eval::direction_str(Direction::None),
            target: None,
            f_before,
            f_after: f_before,
            micros: start.elapsed().as_micros() as u64,
            already_expert: true,
        };
        println!("{}", serde_json::to_string(&wire)?);
        return Ok(());
    }

    let result = match method {
        MethodId::Da => formulate_feedback(&forest, &table, &rects, &x, &da),
        MethodId::IterIter => recourse_core::iter_iter(&forest, &table, &x),
        MethodId::RandRand => {
            recourse_core::rand_rand(&forest, &table, &x, sub_seed(seed, "method", &[0]))
        }
        MethodId::RandIter => {
            recourse_core::rand_iter(&forest, &table, &x, sub_seed(seed, "method", &[0]))
        }
    };
    let micros = start.elapsed().as_micros() as u64;
    let wire = match result {
        Ok(action) => ActionWire {
            feature: action.feature_name.clone(),
            direction: eval::direction_str(action.direction),
            target: action.target_value,
            f_before,
            f_after: action.achieved_f,
            micros,
            already_expert: false,
        },
        // No candidate target: report the query unchanged.
        Err(CoreError::NoSolution) => ActionWire {
            feature: None,
            direction: eval::direction_str(Direction::None),
            target: None,
            f_before,
            f_after: f_before,
            micros,
            already_expert: false,
        },
        Err(e) => return Err(e.into()),
    };
    println!("{}", serde_json::to_string(&wire)?);
    Ok(())
}

enum SweepSpec {
    Trees(Vec<usize>),
    Alpha(Vec<f64>),
}

fn parse_sweep(raw: &str) -> Result<SweepSpec> {
    let bad = || {
        usage(format!(
            "bad --sweep {raw:?}: expected trees=START:END:STEP or alpha=START:END:STEP"
        ))
    };
    let (key, range) = raw.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    match key.trim() {
        "trees" => {
            let nums: std::result::Result<Vec<usize>, _> =
                parts.iter().map(|p| p.trim().parse::<usize>()).collect();
            let nums = nums.map_err(|_| bad())?;
            let [start, end, step] = nums[..] else {
                return Err(bad());
            };
            if start == 0 || step == 0 || start > end {
                return Err(bad());
            }
            Ok(SweepSpec::Trees((start..=end).step_by(step).collect()))
        }
        "alpha" => {
            // Work in integer thousandths so printed alphas stay exact.
            let nums: std::result::Result<Vec<f64>, _> =
                parts.iter().map(|p| p.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|_| bad())?;
            let [start, end, step] = nums[..] else {
                return Err(bad());
            };
            let to_milli = |v: f64| (v * 1000.0).round() as i64;
            let (s, e, p) = (to_milli(start), to_milli(end), to_milli(step));
            if p <= 0 || s <= 0 || s > e || e > 1000 {
                return Err(bad());
            }
            Ok(SweepSpec::Alpha((s..=e).step_by(p as usize).map(|m| m as f64 / 1000.0).collect()))
        }
        _ => Err(bad()),
    }
}

fn parse_methods(raw: &str) -> Result<Vec<MethodId>> {
    let mut methods = Vec::new();
    for part in raw.split(',') {
        let method = MethodId::from_str(part.trim()).map_err(|e| usage(e.to_string()))?;
        if methods.contains(&method) {
            return Err(usage(format!("duplicate method {:?} in --methods", method.name())));
        }
        methods.push(method);
    }
    if methods.is_empty() {
        return Err(usage("--methods must name at least one method"));
    }
    Ok(methods)
}

fn print_summary(report: &MetricsReport) {
    let total: usize = report.folds.iter().map(|f| f.n_queries).sum();
    println!("{} folds, {} queries", report.folds.len(), total);
    println!("{:<11} {:>6}  {:>15}  {:>21}", "method", "SR", "EFF", "TC (s)");
    for name in &report.config.methods {
        let m = &report.methods[name];
        println!(
            "{:<11} {:>6.3}  {:>7.3}\u{b1}{:<7.3}  {:>10.6}\u{b1}{:<10.6}",
            name, m.sr, m.eff_mean, m.eff_std, m.tc_mean, m.tc_std
        );
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| anyhow::Error::new(e).context(format!("writing {}", path.display())))
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut overlay = Overlay::load(args.config.as_deref())?;
    let methods_raw = pick(
        args.methods,
        &mut overlay,
        "methods",
        "da,iter-iter,rand-rand,rand-iter".to_string(),
    )?;
    let trees = pick(args.trees, &mut overlay, "trees", 100)?;
    let depth = pick(args.depth, &mut overlay, "depth", 5)?;
    let features_per_tree = args.features_per_tree.or(overlay.take("features-per-tree")?);
    let alpha = pick(args.alpha, &mut overlay, "alpha", 0.5)?;
    let gamma = pick(args.gamma, &mut overlay, "gamma", 2.0)?;
    let seed = pick(args.seed, &mut overlay, "seed", 0)?;
    let sweep_raw = args.sweep.or(overlay.take("sweep")?);
    let max_queries = args.max_queries.or(overlay.take("max-queries")?);
    overlay.finish()?;

    let methods = parse_methods(&methods_raw)?;
    let da = DaConfig { alpha, gamma };
    da.validate().map_err(|e| usage(e.to_string()))?;
    if max_queries.is_some() && sweep_raw.is_none() {
        return Err(usage("--max-queries only applies to --sweep runs"));
    }

    let dataset = read_dataset_csv(&args.input)?;
    let train = build_train_config(dataset.dim(), trees, depth, features_per_tree, seed)?;
    let report_path = args.report.unwrap_or_else(|| PathBuf::from("report.json"));

    match sweep_raw.as_deref().map(parse_sweep).transpose()? {
        None => {
            let report = eval::run_cv_benchmark(&dataset, &methods, &train, &da, seed)?;
            write_text(&report_path, &report.to_json())?;
            let queries_path = args.queries.unwrap_or_else(|| PathBuf::from("queries.csv"));
            eval::write_queries_csv(&queries_path, &report.queries)?;
            print_summary(&report);
            println!("report: {}", report_path.display());
            println!("queries: {}", queries_path.display());
        }
        Some(SweepSpec::Trees(counts)) => {
            let options = SweepOptions {
                seed,
                max_queries: max_queries.unwrap_or(25),
                ..Default::default()
            };
            let report =
                eval::scalability_sweep(&dataset, &counts, &methods, &train, &da, &options)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            write_text(&report_path, &text)?;
            println!("{:<7} {:>10}  tc_mean (s) per method", "trees", "candidates");
            for row in &report.rows {
                let cells: Vec<String> = report
                    .rows[0]
                    .methods
                    .keys()
                    .map(|name| format!("{name}={:.6}", row.methods[name].tc_mean))
                    .collect();
                println!("{:<7} {:>10}  {}", row.trees, row.candidates, cells.join("  "));
            }
            println!("report: {}", report_path.display());
        }
        Some(SweepSpec::Alpha(alphas)) => {
            let options = SweepOptions {
                seed,
                max_queries: max_queries.unwrap_or(25),
                ..Default::default()
            };
            let report = eval::alpha_sweep(&dataset, &alphas, gamma, &train, &options)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            write_text(&report_path, &text)?;
            println!("{:<7} {:>15}  {:>21}", "alpha", "EFF", "TC (s)");
            for row in &report.rows {
                println!(
                    "{:<7} {:>7.3}\u{b1}{:<7.3}  {:>10.6}\u{b1}{:<10.6}",
                    row.alpha, row.eff_mean, row.eff_std, row.tc_mean, row.tc_std
                );
            }
            println!("report: {}", report_path.display());
        }
    }
    Ok(())
}
