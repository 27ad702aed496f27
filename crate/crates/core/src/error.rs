use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("outcome {outcome} has probability {probability:e}, below the pruning threshold")]
    ZeroProbabilityBranch { outcome: i8, probability: f64 },

    #[error("sequence of length {len} exceeds the enumeration limit of {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("measurement sequence must contain at least one step")]
    EmptySequence,

    #[error("position {position} out of range for a sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("unknown observable set `{0}`")]
    UnknownSetName(String),

    #[error("unknown state `{0}`")]
    UnknownStateName(String),

    #[error("unknown observable label `{0}`")]
    UnknownLabel(String),

    #[error("label `{label}` is not supported by {system}")]
    UnsupportedLabel { label: String, system: String },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate hidden-variable update for `{0}`")]
    DegenerateUpdate(String),

    #[error("conditioning event has zero probability")]
    ZeroProbabilityCondition,

    #[error("preparation list is empty")]
    EmptyPreparationList,

    #[error("unsupported dimension {0}: only two-qubit systems are modeled")]
    UnsupportedDimension(usize),

    #[error("counterfactual flip probabilities are not defined for {0}")]
    CounterfactualUnavailable(String),

    #[error("exact enumeration is not available for {0}")]
    ExactUnavailable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("serialization failed: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
