//! Error types shared across the simulator.

use thiserror::Error;

use crate::time::SimTime;

/// Scenario or parameter validation failure. Raised at build time, never
/// mid-run.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("invalid topology: {0}")]
    BadTopology(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("invalid traffic profile: {0}")]
    BadProfile(String),
}

/// Engine fault. These indicate a logic error in scenario wiring or the
/// simulator itself, not a countable protocol outcome.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled into the past: event at {event}, clock at {clock}")]
    SchedulePast { event: SimTime, clock: SimTime },
    #[error("node {node} began a transmission while already transmitting")]
    ConcurrentTransmit { node: usize },
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
}
