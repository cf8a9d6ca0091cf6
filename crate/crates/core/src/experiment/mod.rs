//! Experiment harness: configuration, static benchmark, per-episode telemetry and
//! the seeded run loops for BLOL and the two baselines.

mod config;
mod metrics;
mod oracle;
mod records;
mod runner;

pub use config::{Algorithm, ArrivalKind, RunConfig};
pub use metrics::{compute_metrics, Accountant, MetricSeries};
pub use oracle::{budget_grid, static_oracle, value_curve, BenchmarkResult, ValueCurve};
pub use records::{read_records, write_records, EpisodeRecord, CSV_HEADER};
pub use runner::{cell_file_name, sweep, Experiment, RunOutcome};

/// RNG stream for episode rollouts (actions and arrivals).
pub const ENV_STREAM: u64 = 1;
/// RNG stream for the demand sequence `rho_k`.
pub const DEMAND_STREAM: u64 = 2;
