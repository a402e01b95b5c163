//! Benchmark harness and file formats around `recourse-core`: synthetic
//! data generation, dataset/forest files, the cross-validated benchmark,
//! and the parameter sweeps. The `recourse` binary is a thin wrapper over
//! this library.

pub mod eval;
pub mod io;
pub mod synth;

pub use eval::{
    alpha_sweep, effectiveness, run_cv_benchmark, scalability_sweep, sub_seed, success_rate,
    AlphaReport, MethodMetrics, MetricsReport, QueryResult, SweepOptions, SweepReport,
};
pub use io::{read_dataset_csv, read_forest, usage, write_dataset_csv, write_forest, UsageError};
pub use synth::{generate_synthetic, SyntheticConfig};
