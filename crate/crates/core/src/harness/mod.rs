//! Configuration, file formats, benchmark suite and end-to-end slew runs.

mod bench;
mod config;
mod output;
mod run;

pub use bench::{
    bench_suite, conditioned_hessian, import_oqp_problem, import_oqp_suite, run_bench,
    synthetic_qp, synthetic_suite, BenchProblem, BenchRecord, BenchReport, Tier, TierStats,
    OQP_INFINITY,
};
pub use config::{
    ClusterConfig, ScenarioConfig, SlewConfig, SolverConfig, SpacecraftConfig, WeightsConfig,
};
pub use output::{
    csv_header, trace_csv, trajectory_csv, write_file, MethodFailure, RunSummary, SlewSummary,
    TrajectoryTable, CSV_COLUMNS, CSV_UNITS,
};
pub use run::{parse_methods, run_slew, write_slew_outputs, SlewRun};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    ConfigSyntax(String),
    #[error("config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("unknown method `{0}` (expected baseline, joint, sequential or all)")]
    UnknownMethod(String),
    #[error("trajectory table: {0}")]
    Table(String),
    #[error("{path}: {reason}")]
    Import { path: String, reason: String },
}
