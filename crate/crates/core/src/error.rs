use thiserror::Error;

use crate::model::PriorKind;
use crate::subset::MAX_URNS;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("a problem needs at least one urn")]
    NoUrns,
    #[error("{0} urns exceeds the supported maximum of {MAX_URNS}")]
    TooManyUrns(usize),
    #[error("duplicate urn label `{0}`")]
    DuplicateLabel(String),
    #[error("urn `{0}` must contain at least one marble")]
    ZeroMarbles(String),
    #[error("probability {value} for {what} is outside [0, 1]")]
    ProbabilityOutOfRange { what: String, value: f64 },
    #[error("unknown urn `{0}`")]
    UnknownUrn(String),
    #[error("no marginal probability given for urn `{0}`")]
    MissingMarginal(String),
    #[error("marginal probability for urn `{0}` given more than once")]
    DuplicateMarginal(String),
    #[error("expected {expected} marginals, got {got}")]
    MarginalCount { expected: usize, got: usize },
    #[error("joint probabilities are only accepted for general priors")]
    JointsNotAllowed,
    #[error("joint over {0} must name at least two distinct urns")]
    JointTooSmall(String),
    #[error("joint over {0} given more than once")]
    DuplicateJoint(String),
    #[error("urn index {index} out of range for {count} urns")]
    UrnIndexOutOfRange { index: usize, count: usize },
    #[error("prior model failed validation: {0}")]
    InvalidModel(String),

    #[error("state has {got} counts but the problem has {expected} urns")]
    StateShape { expected: usize, got: usize },
    #[error("urn {urn}: {drawn} marbles drawn but it only holds {marbles}")]
    CountExceedsMarbles {
        urn: usize,
        drawn: u32,
        marbles: u32,
    },
    #[error("state is unreachable without a red draw (survival probability {survival:e})")]
    ImpossibleState { survival: f64 },
    #[error("urn {0} has no marbles left")]
    EmptyUrn(usize),
    #[error("operation requires a {expected} prior, problem has a {actual} prior")]
    WrongKind {
        expected: PriorKind,
        actual: PriorKind,
    },
    #[error("derived probability {0} is outside [0, 1] beyond tolerance")]
    NumericalRange(f64),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("enumeration of {count} candidates exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error("a simulation needs at least one trial")]
    NoTrials,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
