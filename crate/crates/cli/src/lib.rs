//! Experiment orchestration for the aggregation lab: config parsing,
//! experiment dispatch, and report emission.

pub mod config;
pub mod experiments;
pub mod report;
pub mod svg;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Stat(#[from] agglab_core::StatError),
    #[error(transparent)]
    Train(#[from] agglab_core::TrainError),
    #[error(transparent)]
    Aggregation(#[from] agglab_core::AggregationError),
    #[error(transparent)]
    Enumeration(#[from] agglab_core::EnumerationError),
}

impl CliError {
    /// CI-facing exit code: 2 for config and IO problems. Check failures
    /// are not errors; they surface through the bundle's `passed` flag as
    /// exit code 1.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
