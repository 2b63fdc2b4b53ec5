use thiserror::Error;

use crate::tracks::{AgentId, Frame};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate position for agent {agent} at frame {frame}")]
    Duplicate { agent: AgentId, frame: Frame },

    #[error("track gap: agent {agent} has no position at frame {frame}")]
    Gap { agent: AgentId, frame: Frame },

    #[error("no agents")]
    NoAgents,

    #[error("track set needs at least 2 frames, found {0}")]
    TooFewFrames(usize),

    #[error("missing data: agent {agent} has no position at frame {frame}")]
    MissingData { agent: AgentId, frame: Frame },

    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("model is defective (eigenvector matrix condition number {condition:e})")]
    Defective { condition: f64 },

    #[error("modal sum left an imaginary residue of {0:e}")]
    ImaginaryResidue(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("prediction horizon exceeds available frames: agent {agent} lacks frame {frame}")]
    Horizon { agent: AgentId, frame: Frame },

    #[error("agent sets differ between partitions")]
    AgentMismatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("training set contains a single class")]
    DegenerateTraining,

    #[error("forest has no trees")]
    Untrained,

    #[error("expected {expected} features, got {found}")]
    FeatureLength { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
