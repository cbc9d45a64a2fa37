//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any pipeline stage.
///
/// Variants carry enough context to point at the offending input (file
/// line, frame index, terminal position, node id) without holding
/// references into it.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or unreadable input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Detection stream violated a structural rule (ordering, bounds,
    /// duplicate ids). The frame index locates the first violation.
    #[error("invalid stream at frame {frame}: {reason}")]
    InvalidStream { frame: u64, reason: String },

    /// A sentence was rejected by the grammar. `position` is the index of
    /// the first terminal that cannot extend any valid parse.
    #[error("sentence not derivable: offending terminal {terminal:?} at position {position}")]
    ParseRejected { position: usize, terminal: String },

    /// A plan graph contains a cycle, so no execution order exists.
    #[error("plan is not acyclic: cycle through node {node}")]
    CyclicPlan { node: String },

    /// Simulation stalled: every listed node still has unmet dependencies.
    #[error("simulation deadlock: nodes {nodes:?} can never start")]
    Deadlock { nodes: Vec<String> },

    /// Configuration is incomplete or inconsistent.
    #[error("bad configuration: {0}")]
    Config(String),

    /// A pipeline stage failed; wraps the underlying error with the
    /// stage's name so end-to-end runs report where they died.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
