//! Error types shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("config: {key}: {reason}")]
    Config { key: &'static str, reason: String },
    #[error("unknown node id {0}")]
    UnknownNode(u32),
    #[error("topology invariant violated: {0}")]
    Invariant(String),
    #[error("topology parse failed: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("drain amount must be non-negative, got {0}")]
    NegativeDrain(f64),
    #[error("energy model: {key}: {reason}")]
    Config { key: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot schedule event at t={requested}ms before current clock t={now}ms")]
    ScheduleInPast { requested: u64, now: u64 },
    #[error("invariant violated at round {round}: {what}\n--- recent trace ---\n{trace_tail}")]
    InvariantViolation {
        round: u32,
        what: String,
        trace_tail: String,
    },
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("no live nodes remain in cell {0}")]
    CellExtinct(u32),
    #[error("no live head-cluster nodes remain")]
    NetworkHeadless,
    #[error("candidate list is empty")]
    NoCandidates,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {key}: {reason}")]
    Config { key: String, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Validation(String),
}
