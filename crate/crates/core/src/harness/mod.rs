//! End-to-end orchestration: scenario files, the hierarchical training loop,
//! and report emission.

pub mod report;
pub mod run;
pub mod scenario;

use thiserror::Error;

use crate::learner::LearnerError;

pub use report::{emit_reports, metrics_table, summary_table, Table};
pub use run::{
    contact_statistics, run, run_single_gateway, ConstraintAudit, ContactStats, MetricsLog, RoundMetrics, RunOutput,
    ViolationKind,
};
pub use scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("round {round}, satellite {sat_id}: {message}")]
    Training { round: usize, sat_id: u32, message: String },
    #[error("round {round}: aggregation failed: {message}")]
    Aggregation { round: usize, message: String },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("metrics log is empty")]
    EmptyLog,
    #[error("i/o: {0}")]
    Io(String),
}
