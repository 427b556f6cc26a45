//! Experiment harness: populate a gateway, drive rounds of authorized
//! retrievals and unauthorized probes, and report the latencies.

pub mod client;
pub mod report;
pub mod scenario;

use thiserror::Error;

pub use client::{Client, ClientError, HttpClient, InProcess};
pub use report::{emit_report, summarize, Format, Operation, Sample, SummaryRow};
pub use scenario::{run_scenario, setup, sweep, workload, Assignment, Pair, RoundPlan, ScenarioConfig, SweepResult, Tally};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Config(String),
    /// Registration or record upload failed before any timing started.
    #[error("setup failed: {0}")]
    SetupFailure(String),
    /// The gateway answered a timed call in a way the workload rules out.
    #[error("unexpected outcome: {0}")]
    Unexpected(String),
    #[error("no samples to report")]
    EmptyData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
