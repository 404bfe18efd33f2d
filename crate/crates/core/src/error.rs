use thiserror::Error;

use crate::state::BlockId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown block id `{0}`")]
    UnknownBlock(BlockId),

    #[error("duplicate block id `{0}`")]
    DuplicateBlock(BlockId),

    #[error("empty block selection")]
    EmptySelection,

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("matrix is not positive definite after jitter: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid particle set: {0}")]
    InvalidParticles(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("action `{action}` references block `{block}` that is neither a prior block nor created earlier")]
    DanglingReference { action: String, block: BlockId },

    #[error("involved set is missing block `{block}` used by action `{action}`")]
    FootprintViolation { action: String, block: BlockId },

    #[error("parts overlap on block `{0}`")]
    OverlappingParts(BlockId),

    #[error("involved sets belong to different layouts")]
    LayoutMismatch,

    #[error("bandwidth matrix is singular (coordinate {coordinate} has zero spread)")]
    SingularBandwidth { coordinate: usize },

    #[error("sample budget: {0}")]
    InvalidBudget(String),

    #[error("accumulator context mismatch: {0}")]
    ContextMismatch(String),

    #[error("calculator `{calculator}` does not support {what}")]
    Unsupported {
        calculator: &'static str,
        what: &'static str,
    },

    #[error("MI calculation over involved set {involved:?} failed: {source}")]
    Calculator {
        involved: Vec<BlockId>,
        #[source]
        source: Box<Error>,
    },

    #[error("planner failed at node path {path:?}: {source}")]
    Planner {
        path: Vec<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
