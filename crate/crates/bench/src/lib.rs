//! Benchmark harness: seeded Ricker-map (or linear-Gaussian) trials for the
//! AMP, KLF and IPLF estimators, per-time-step absolute-error quantiles, and
//! CSV/SVG emission.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod stats;
pub mod validate;

pub use config::{parse_methods, BenchConfig, Method, ModelKind};
pub use error::{BenchError, Result};
pub use output::{emit_csv, emit_plot};
pub use runner::{run_benchmark, BenchOutput, QuantileSummary, Stage, SummaryRow, TrialResult};
pub use stats::quantile;
