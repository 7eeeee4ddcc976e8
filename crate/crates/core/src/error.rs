//! Shared error type for the core library.

use thiserror::Error;

/// Errors surfaced by graph construction, sampling, scoring and search.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A variable or edge index fell outside `[0, d)`.
    #[error("index {index} out of range for d={d}")]
    IndexOutOfRange { index: usize, d: usize },

    /// The edge set contains a directed cycle.
    #[error("directed graph contains a cycle (no topological order)")]
    CyclicGraph,

    /// Invalid edge (self-loop or duplicate).
    #[error("invalid edge {parent}->{child}: {reason}")]
    InvalidEdge {
        parent: usize,
        child: usize,
        reason: String,
    },

    /// A parameter was outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A linear SEM simulation was asked for an edge with no weight.
    #[error("missing weight for edge {parent}->{child}")]
    MissingWeight { parent: usize, child: usize },

    /// Cholesky factorization failed: the matrix is not positive definite.
    /// `pivot` is the row at which the factorization broke down.
    #[error("matrix not positive definite (Cholesky failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    /// A kernel Gram matrix stayed indefinite after maximum jitter escalation.
    #[error("Gram matrix not positive definite after jitter escalation up to {max_jitter}")]
    GramNotPd { max_jitter: f64 },

    /// Dataset shape or content violated a precondition.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// Model/configuration mismatch.
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    /// A masked likelihood evaluation produced a non-finite value.
    #[error("non-finite log-likelihood under mask {mask:?}")]
    NonFiniteLoss { mask: Vec<u8> },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (batch {batch}): non-finite loss under mask {mask:?}")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        mask: Vec<u8>,
    },

    /// A scorer failed while evaluating a candidate during search.
    #[error("scorer failed for target {target} with candidate {candidate:?}: {source}")]
    ScorerFailed {
        target: usize,
        candidate: Option<usize>,
        #[source]
        source: Box<CoreError>,
    },

    /// One or more per-target searches failed; all failures are collected.
    #[error("discovery failed for {} target(s): {}", failures.len(),
            failures.iter().map(|(t, e)| format!("target {t}: {e}")).collect::<Vec<_>>().join("; "))]
    DiscoveryFailed { failures: Vec<(usize, String)> },

    /// Exhaustive sub-matrix enumeration was refused.
    #[error("exact enumeration refused: {combinations} sub-matrices exceed cap {cap}")]
    EnumerationTooLarge { combinations: u128, cap: u128 },

    /// Checkpoint or data file could not be parsed.
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CoreError::MalformedFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
